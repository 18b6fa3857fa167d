//! 8-bit affine per-tensor quantization.

use super::Matrix;

/// Smallest scale used for an all-zero tensor.
pub const SCALE_FLOOR: f32 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<i8>,
    pub scale: f32,
    pub zero_point: i32,
}

/// Smallest f32 that is >= `x` (for positive finite `x`).
fn f32_at_least(x: f64) -> f32 {
    let mut s = x as f32;
    while (s as f64) < x {
        s = f32::from_bits(s.to_bits() + 1);
    }
    s
}

/// Scale and zero point covering `[min, max]` widened to include 0.
pub fn affine_params(min: f64, max: f64) -> (f32, i32) {
    let lo = min.min(0.0);
    let hi = max.max(0.0);
    if hi - lo <= 0.0 {
        return (SCALE_FLOOR, 0);
    }
    let scale = f32_at_least((hi - lo) / 255.0).max(SCALE_FLOOR);
    let zp = (-128.0 - lo / scale as f64).round().clamp(-128.0, 127.0) as i32;
    (scale, zp)
}

#[inline]
pub fn quantize_value(x: f64, scale: f32, zero_point: i32) -> i8 {
    ((x / scale as f64).round() + zero_point as f64).clamp(-128.0, 127.0) as i8
}

#[inline]
pub fn dequantize_value(q: i8, scale: f32, zero_point: i32) -> f64 {
    scale as f64 * (q as i32 - zero_point) as f64
}

/// Quantize-dequantize round trip used for fake-quant activations.
#[inline]
pub fn fake_quant(x: f64, scale: f32, zero_point: i32) -> f64 {
    dequantize_value(quantize_value(x, scale, zero_point), scale, zero_point)
}

impl QuantizedTensor {
    pub fn quantize(m: &Matrix) -> Self {
        let (min, max) = m
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let constant = m.data.first().copied().filter(|_| min == max);
        let (scale, zero_point) = match constant {
            Some(c) if c != 0.0 => (f32_at_least(c.abs()), 0),
            _ if m.data.is_empty() => (SCALE_FLOOR, 0),
            _ => affine_params(min, max),
        };
        let values = m
            .data
            .iter()
            .map(|&x| quantize_value(x, scale, zero_point))
            .collect();
        QuantizedTensor {
            rows: m.rows,
            cols: m.cols,
            values,
            scale,
            zero_point,
        }
    }

    pub fn dequantize(&self) -> Matrix {
        let data = self
            .values
            .iter()
            .map(|&q| dequantize_value(q, self.scale, self.zero_point))
            .collect();
        Matrix::from_vec(self.rows, self.cols, data)
    }

    /// Largest elementwise round-trip error against `original`.
    pub fn max_error(&self, original: &Matrix) -> f64 {
        self.dequantize()
            .data
            .iter()
            .zip(&original.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_weights_scale_and_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut m = Matrix::uniform(40, 50, 1.0, &mut rng);
        m.data[0] = -1.0;
        m.data[1] = 1.0;
        let q = QuantizedTensor::quantize(&m);
        assert!((q.scale as f64 - 2.0 / 255.0).abs() < 1e-6);
        assert!(q.max_error(&m) <= q.scale as f64 / 2.0 + 1e-12);
    }

    #[test]
    fn all_zero_tensor_is_exact() {
        let m = Matrix::zeros(3, 4);
        let q = QuantizedTensor::quantize(&m);
        assert_eq!(q.scale, SCALE_FLOOR);
        assert!(q.values.iter().all(|&v| v as i32 == q.zero_point));
        assert_eq!(q.dequantize(), m);
    }

    #[test]
    fn constant_tensor_is_exact() {
        let m = Matrix::filled(2, 2, -0.75);
        let q = QuantizedTensor::quantize(&m);
        assert_eq!(q.dequantize(), m);
    }

    #[test]
    fn positive_only_range_includes_zero() {
        let m = Matrix::row_vector(vec![0.5, 1.0, 2.0]);
        let q = QuantizedTensor::quantize(&m);
        assert_eq!(q.zero_point, -128);
        assert!(q.max_error(&m) <= q.scale as f64 / 2.0 + 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip_error_within_half_scale(
            data in prop::collection::vec(-50.0f64..50.0, 1..64),
            shift in -20.0f64..20.0,
        ) {
            let n = data.len();
            let m = Matrix::from_vec(1, n, data.iter().map(|x| x + shift).collect());
            let q = QuantizedTensor::quantize(&m);
            prop_assert!((-128..=127).contains(&q.zero_point));
            prop_assert!(q.max_error(&m) <= q.scale as f64 / 2.0 + 1e-12);
        }
    }
}
