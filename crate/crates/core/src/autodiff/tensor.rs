use super::Real;

/// Dense channel-major `C×H×W` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![S::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn scalar(v: S) -> Self {
        Self::from_vec(1, 1, 1, vec![v])
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[S] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [S] {
        let p = self.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn item(&self) -> S {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
