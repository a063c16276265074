use rand::Rng;

/// A trainable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
    /// Set when a gradient was accumulated since the last `zero_grad`.
    pub touched: bool,
}

impl Param {
    pub fn filled(len: usize, v: f32) -> Self {
        Param {
            value: vec![v; len],
            grad: vec![0.0; len],
            touched: false,
        }
    }

    /// He/Kaiming uniform, bound `sqrt(6 / fan_in)`.
    pub fn kaiming_uniform<R: Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt() as f32;
        Param {
            value: (0..len).map(|_| rng.gen_range(-bound..bound)).collect(),
            grad: vec![0.0; len],
            touched: false,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn accumulate(&mut self, g: &[f32]) {
        debug_assert_eq!(g.len(), self.grad.len());
        for (a, b) in self.grad.iter_mut().zip(g) {
            *a += b;
        }
        self.touched = true;
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
        self.touched = false;
    }
}
