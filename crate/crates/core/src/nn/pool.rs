use super::{Real, Tensor4};

/// 2×2 max pooling, stride 2, odd trailing rows/columns dropped.
/// Returns the pooled tensor and the flat input index of each maximum.
pub fn max_pool2x2<T: Real>(x: &Tensor4<T>) -> (Tensor4<T>, Vec<u32>) {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor4::zeros(n, c, oh, ow);
    let mut argmax = vec![0u32; n * c * oh * ow];
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                let o = (plane * oh + i) * ow + j;
                y.data[o] = x.data[best];
                argmax[o] = best as u32;
            }
        }
    }
    (y, argmax)
}

pub fn max_pool2x2_backward<T: Real>(input_shape: [usize; 4], argmax: &[u32], dy: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, h, w] = input_shape;
    let mut dx = Tensor4::zeros(n, c, h, w);
    for (&idx, &d) in argmax.iter().zip(&dy.data) {
        dx.data[idx as usize] = dx.data[idx as usize] + d;
    }
    dx
}

/// Max over each channel's spatial plane → `n × c` (row-major), plus argmax.
pub fn global_max_pool<T: Real>(x: &Tensor4<T>) -> (Vec<T>, Vec<u32>) {
    let hw = x.h * x.w;
    let mut out = Vec::with_capacity(x.n * x.c);
    let mut argmax = Vec::with_capacity(x.n * x.c);
    for (plane, s) in x.data.chunks(hw).enumerate() {
        let mut best = 0;
        for (k, v) in s.iter().enumerate() {
            if *v > s[best] {
                best = k;
            }
        }
        out.push(s[best]);
        argmax.push((plane * hw + best) as u32);
    }
    (out, argmax)
}

pub fn global_max_pool_backward<T: Real>(input_shape: [usize; 4], argmax: &[u32], dy: &[T]) -> Tensor4<T> {
    let [n, c, h, w] = input_shape;
    let mut dx = Tensor4::zeros(n, c, h, w);
    for (&idx, &d) in argmax.iter().zip(dy) {
        dx.data[idx as usize] = d;
    }
    dx
}
