//! Activation range calibration and fake-quantized inference.

use std::collections::BTreeMap;

use crate::embedder::ActivationHook;
use crate::nn::{affine_params, fake_quant, Graph, Var};

/// Observed (min, max) per activation site.
pub type ActivationRanges = BTreeMap<String, (f64, f64)>;

/// Records the running range of every activation it sees.
#[derive(Debug, Default)]
pub struct CalibrationHook {
    pub ranges: ActivationRanges,
}

impl ActivationHook for CalibrationHook {
    fn visit(&mut self, g: &mut Graph<'_>, site: &str, v: Var) -> Var {
        let m = g.value(v);
        let lo = m.data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = m.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = self.ranges.entry(site.to_string()).or_insert((lo, hi));
        e.0 = e.0.min(lo);
        e.1 = e.1.max(hi);
        v
    }
}

/// Rounds activations through the int8 grid of their calibrated range.
/// Sites never seen during calibration pass through.
#[derive(Debug)]
pub struct FakeQuantHook {
    grids: BTreeMap<String, (f32, i32)>,
}

impl FakeQuantHook {
    pub fn new(ranges: ActivationRanges) -> Self {
        FakeQuantHook {
            grids: ranges.into_iter().map(|(k, (lo, hi))| (k, affine_params(lo, hi))).collect(),
        }
    }
}

impl ActivationHook for FakeQuantHook {
    fn visit(&mut self, g: &mut Graph<'_>, site: &str, v: Var) -> Var {
        match self.grids.get(site) {
            Some(&(scale, zp)) => g.straight_through(v, |x| fake_quant(x, scale, zp)),
            None => v,
        }
    }
}
