use serde::{Deserialize, Serialize};

/// Dense NCHW batch of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w, data: vec![0.0; n * c * h * w] }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length does not match shape");
        Self { n, c, h, w, data }
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, v: f64) -> Self {
        Self { n, c, h, w, data: vec![v; n * c * h * w] }
    }

    /// Stacks equally shaped single samples (each `c*h*w` long) into a batch.
    pub fn stack(samples: &[&[f64]], c: usize, h: usize, w: usize) -> Self {
        let per = c * h * w;
        let mut data = Vec::with_capacity(samples.len() * per);
        for s in samples {
            assert_eq!(s.len(), per, "sample size mismatch");
            data.extend_from_slice(s);
        }
        Self { n: samples.len(), c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert!(self.same_shape(other), "shape mismatch in add");
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }
}
