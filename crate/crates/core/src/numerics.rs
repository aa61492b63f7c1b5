//! Dense-array math shared by the rest of the crate: a row-major `f64`
//! tensor, normalized Gaussian kernels, same-size 2-D convolution with
//! replicate padding, and a max-stabilized softmax.

use crate::error::{Error, Result};

/// Row-major dense array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting a data length that does not match the shape
    /// and any non-finite value.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at flat index {pos}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    /// One-dimensional tensor.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &dim)| {
                assert!(i < dim, "index {i} out of bounds for dim {dim}");
                acc * dim + i
            })
    }

    /// Element at a multi-dimensional index. Panics when out of bounds.
    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.flat_index(index)]
    }

    /// Same data viewed under a new shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }
}

/// Square convolution kernel with odd side and weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    /// Normalizes `weights` (row-major `size`×`size`) to sum one.
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::invalid(format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::shape(format!(
                "kernel of size {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("kernel weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("kernel weights sum to zero"));
        }
        Ok(Kernel2D {
            size,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// The single-cell identity kernel.
    pub fn identity() -> Self {
        Kernel2D {
            size: 1,
            weights: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }
}

/// Gaussian kernel of odd side `k`, normalized to sum one.
///
/// The `1/(2πσ²)` prefactor is dropped since it cancels in the normalization.
pub fn gaussian_kernel2d(k: usize, sigma: f64) -> Result<Kernel2D> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::invalid(format!("kernel size must be odd and positive, got {k}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let c = (k / 2) as isize;
    let two_var = 2.0 * sigma * sigma;
    let mut weights = Vec::with_capacity(k * k);
    for i in 0..k as isize {
        for j in 0..k as isize {
            let d2 = ((i - c).pow(2) + (j - c).pow(2)) as f64;
            // exp(-0/0) would be NaN once sigma² underflows.
            weights.push(if d2 == 0.0 { 1.0 } else { (-d2 / two_var).exp() });
        }
    }
    Kernel2D::from_weights(k, weights)
}

/// Same-size convolution of a row-major `height`×`width` plane with
/// replicate padding, written into `out`.
pub fn conv2d_same_into(src: &[f64], height: usize, width: usize, kernel: &Kernel2D, out: &mut [f64]) {
    debug_assert_eq!(src.len(), height * width);
    debug_assert_eq!(out.len(), height * width);
    let k = kernel.size();
    let r = kernel.radius() as isize;
    let (h, w) = (height as isize, width as isize);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for i in 0..k as isize {
                let sy = (y + i - r).clamp(0, h - 1) as usize;
                let row = &src[sy * width..(sy + 1) * width];
                for j in 0..k as isize {
                    let sx = (x + j - r).clamp(0, w - 1) as usize;
                    acc += kernel.weight(i as usize, j as usize) * row[sx];
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
}

/// Same-size 2-D convolution of an `[H, W]` map with replicate padding.
pub fn conv2d_same(map: &Tensor, kernel: &Kernel2D) -> Result<Tensor> {
    let [h, w] = match map.shape() {
        &[h, w] if h > 0 && w > 0 => [h, w],
        s => return Err(Error::shape(format!("conv2d_same expects a non-empty [H, W] map, got {s:?}"))),
    };
    let mut out = vec![0.0; h * w];
    conv2d_same_into(map.data(), h, w, kernel, &mut out);
    Ok(Tensor {
        shape: vec![h, w],
        data: out,
    })
}

/// In-place softmax of a slice, stabilized by subtracting the maximum.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

pub fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// `log(softmax(logits))` computed directly in the log domain.
pub fn log_softmax_slice(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

/// Softmax along `axis` of an arbitrary-rank tensor.
pub fn softmax(logits: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = logits.shape();
    if axis >= shape.len() {
        return Err(Error::invalid(format!(
            "axis {axis} out of range for rank {}",
            shape.len()
        )));
    }
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = logits.data().to_vec();
    let mut lane = vec![0.0; axis_len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            for (a, slot) in lane.iter_mut().enumerate() {
                *slot = out[base + a * inner];
            }
            softmax_in_place(&mut lane);
            for (a, v) in lane.iter().enumerate() {
                out[base + a * inner] = *v;
            }
        }
    }
    Ok(Tensor {
        shape: shape.to_vec(),
        data: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_conv(src: &[f64], h: usize, w: usize, kernel: &Kernel2D) -> Vec<f64> {
        let k = kernel.size() as i64;
        let c = k / 2;
        let mut out = vec![0.0; h * w];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        let yy = (y + i - c).max(0).min(h as i64 - 1);
                        let xx = (x + j - c).max(0).min(w as i64 - 1);
                        acc += kernel.weight(i as usize, j as usize) * src[(yy * w as i64 + xx) as usize];
                    }
                }
                out[(y * w as i64 + x) as usize] = acc;
            }
        }
        out
    }

    #[test]
    fn single_cell_kernel_is_one() {
        for sigma in [0.01, 1.0, 100.0] {
            assert_eq!(gaussian_kernel2d(1, sigma).unwrap().weights(), &[1.0]);
        }
    }

    #[test]
    fn three_by_three_unit_sigma() {
        let k = gaussian_kernel2d(3, 1.0).unwrap();
        let total = 1.0 + 4.0 * (-0.5f64).exp() + 4.0 * (-1.0f64).exp();
        assert!((total - 4.89764).abs() < 1e-5);
        assert!((k.weight(1, 1) - 0.20418).abs() < 1e-4);
        assert!((k.weight(0, 1) - 0.12384).abs() < 1e-4);
        assert!((k.weight(0, 0) - 0.07511).abs() < 1e-4);
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_sigma_is_a_delta() {
        let k = gaussian_kernel2d(3, 0.05).unwrap();
        assert!(k.weight(1, 1) >= 1.0 - 1e-12);
        for (idx, w) in k.weights().iter().enumerate() {
            if idx != 4 {
                assert!(*w <= 1e-12);
            }
        }
    }

    #[test]
    fn kernel_rejects_bad_arguments() {
        assert!(matches!(gaussian_kernel2d(2, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gaussian_kernel2d(0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gaussian_kernel2d(3, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gaussian_kernel2d(3, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn kernel_symmetries() {
        let k = gaussian_kernel2d(5, 1.3).unwrap();
        let n = k.size();
        for i in 0..n {
            for j in 0..n {
                let v = k.weight(i, j);
                assert_eq!(v, k.weight(n - 1 - i, j));
                assert_eq!(v, k.weight(i, n - 1 - j));
                assert_eq!(v, k.weight(j, i));
            }
        }
    }

    #[test]
    fn identity_kernel_leaves_map_unchanged() {
        let map = Tensor::new(vec![2, 3], vec![0.1, 0.5, 0.9, 0.3, 0.2, 0.7]).unwrap();
        assert_eq!(conv2d_same(&map, &Kernel2D::identity()).unwrap(), map);
    }

    #[test]
    fn constant_map_stays_constant() {
        let map = Tensor::new(vec![4, 5], vec![0.37; 20]).unwrap();
        let out = conv2d_same(&map, &gaussian_kernel2d(5, 2.0).unwrap()).unwrap();
        for v in out.data() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_matches_reference_loop() {
        use rand::Rng;
        let mut rng = crate::seed::rng(11);
        let data: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let map = Tensor::new(vec![5, 5], data.clone()).unwrap();
        let kernel = gaussian_kernel2d(3, 1.0).unwrap();
        let out = conv2d_same(&map, &kernel).unwrap();
        let expected = reference_conv(&data, 5, 5, &kernel);
        for (a, b) in out.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_rejects_wrong_rank() {
        let t = Tensor::zeros(vec![2, 2, 2]);
        assert!(conv2d_same(&t, &Kernel2D::identity()).is_err());
    }

    #[test]
    fn softmax_examples() {
        let uniform = softmax(&Tensor::from_vec(vec![0.0; 4]).unwrap(), 0).unwrap();
        assert_eq!(uniform.data(), &[0.25; 4]);

        let two = softmax(&Tensor::from_vec(vec![2.0, 0.0]).unwrap(), 0).unwrap();
        assert!((two.data()[0] - 0.88080).abs() < 1e-5);
        assert!((two.data()[1] - 0.11920).abs() < 1e-5);

        let big = softmax(&Tensor::from_vec(vec![1000.0, 0.0]).unwrap(), 0).unwrap();
        assert!((big.data()[0] - 1.0).abs() < 1e-12);
        assert!(big.data()[1] >= 0.0 && big.data()[1] < 1e-12);
    }

    #[test]
    fn softmax_along_inner_axis() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        let s = softmax(&t, 0).unwrap();
        for col in 0..3 {
            let total = s.at(&[0, col]) + s.at(&[1, col]);
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(softmax(&t, 2).is_err());
    }

    #[test]
    fn tensor_rejects_bad_data() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(
            logits in proptest::collection::vec(-30.0f64..30.0, 2..8),
            shift in -50.0f64..50.0,
        ) {
            let a = softmax_slice(&logits);
            let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
            let b = softmax_slice(&shifted);
            let total: f64 = a.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x > 0.0);
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn channelwise_conv_preserves_pixel_sums(
            h in 1usize..7,
            w in 1usize..7,
            channels in 2usize..5,
            sigma in 0.2f64..3.0,
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed);
            let mut planes = vec![vec![0.0; h * w]; channels];
            for p in 0..h * w {
                let raw: Vec<f64> = (0..channels).map(|_| rng.random::<f64>() + 1e-3).collect();
                let total: f64 = raw.iter().sum();
                for c in 0..channels {
                    planes[c][p] = raw[c] / total;
                }
            }
            let kernel = gaussian_kernel2d(3, sigma).unwrap();
            let outs: Vec<Vec<f64>> = planes.iter().map(|plane| {
                let mut out = vec![0.0; h * w];
                conv2d_same_into(plane, h, w, &kernel, &mut out);
                out
            }).collect();
            for p in 0..h * w {
                let total: f64 = outs.iter().map(|o| o[p]).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }
}
