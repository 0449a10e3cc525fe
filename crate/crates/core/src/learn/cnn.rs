//! Reference convolutional network.
//!
//! `conv 3x3 (1 -> 8) -> ReLU -> maxpool 2x2 -> conv 3x3 (8 -> 16) -> ReLU ->
//! maxpool 2x2 -> global average pool -> linear (16 -> 1) -> sigmoid`.
//! Convolutions use zero "same" padding; pooling drops odd trailing
//! rows/columns. Global pooling makes the network indifferent to epoch width.
//! Images are stored as `f32`; all arithmetic is `f64`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{bce_with_logit, common_shape, zscore, Architecture, Classifier, Encoded};
use crate::error::{Error, Result};
use crate::features::FeatureImage;

const C1: usize = 8;
const C2: usize = 16;
const W1: usize = 0;
const B1: usize = W1 + C1 * 9;
const W2: usize = B1 + C1;
const B2: usize = W2 + C2 * C1 * 9;
const W3: usize = B2 + C2;
const B3: usize = W3 + C2;
const N_PARAMS: usize = B3 + 1;

/// Smallest accepted image side (two 2x2 poolings).
pub const MIN_SIDE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCnn {
    standardize: bool,
    shape: Option<(usize, usize)>,
    params: Vec<f64>,
}

struct Pooled {
    out: Vec<f64>,
    argmax: Vec<usize>,
    h: usize,
    w: usize,
}

struct Forward {
    a1: Vec<f64>,
    p1: Pooled,
    a2: Vec<f64>,
    p2: Pooled,
    g: Vec<f64>,
    z: f64,
}

/// Zero-padded 3x3 convolution, `ic x h x w -> oc x h x w`.
fn conv3x3(input: &[f64], ic: usize, h: usize, w: usize, wts: &[f64], bias: &[f64], oc: usize) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; oc * hw];
    for o in 0..oc {
        let out_o = &mut out[o * hw..(o + 1) * hw];
        out_o.fill(bias[o]);
        for i in 0..ic {
            let inp = &input[i * hw..(i + 1) * hw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = wts[((o * ic + i) * 3 + ky) * 3 + kx];
                    let (y0, y1) = tap_range(ky, h);
                    let (x0, x1) = tap_range(kx, w);
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let orow = &mut out_o[y * w + x0..y * w + x1];
                        let irow = &inp[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                        for (a, b) in orow.iter_mut().zip(irow) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output positions whose input tap `k` (0..3, centered at 1) is in bounds.
fn tap_range(k: usize, n: usize) -> (usize, usize) {
    let lo = usize::from(k == 0);
    let hi = if k == 2 { n.saturating_sub(1) } else { n };
    (lo.min(hi), hi)
}

/// Gradients of [`conv3x3`]: accumulates into `dw`, `db` and, when given,
/// `din`.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    ic: usize,
    h: usize,
    w: usize,
    wts: &[f64],
    oc: usize,
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    let hw = h * w;
    for o in 0..oc {
        let dout_o = &dout[o * hw..(o + 1) * hw];
        db[o] += dout_o.iter().sum::<f64>();
        for i in 0..ic {
            let inp = &input[i * hw..(i + 1) * hw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wi = ((o * ic + i) * 3 + ky) * 3 + kx;
                    let (y0, y1) = tap_range(ky, h);
                    let (x0, x1) = tap_range(kx, w);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let drow = &dout_o[y * w + x0..y * w + x1];
                        let irow = &inp[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                        acc += drow.iter().zip(irow).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(din) = din.as_deref_mut() {
                            let wv = wts[wi];
                            let start = i * hw + iy * w + x0 + kx - 1;
                            for (d, g) in din[start..start + (x1 - x0)].iter_mut().zip(drow) {
                                *d += wv * g;
                            }
                        }
                    }
                    dw[wi] += acc;
                }
            }
        }
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

fn maxpool2(input: &[f64], c: usize, h: usize, w: usize) -> Pooled {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut argmax = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..ph {
            for x in 0..pw {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let j = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[j] > input[best] {
                        best = j;
                    }
                }
                out.push(input[best]);
                argmax.push(best);
            }
        }
    }
    Pooled {
        out,
        argmax,
        h: ph,
        w: pw,
    }
}

impl ReferenceCnn {
    pub fn new(standardize: bool) -> Self {
        ReferenceCnn {
            standardize,
            shape: None,
            params: Vec::new(),
        }
    }

    pub(crate) fn from_parts(standardize: bool, shape: Option<(usize, usize)>, params: Vec<f64>) -> Result<Self> {
        if params.len() != N_PARAMS {
            return Err(Error::MalformedHeader(format!(
                "reference CNN expects {N_PARAMS} parameters, found {}",
                params.len()
            )));
        }
        Ok(ReferenceCnn {
            standardize,
            shape,
            params,
        })
    }

    pub const N_PARAMS: usize = N_PARAMS;

    /// Random parameters without fitting data, for gradient checks.
    pub fn with_random_params(rng: &mut ChaCha8Rng) -> Self {
        let mut m = ReferenceCnn::new(true);
        m.init_params(rng);
        m
    }

    fn init_params(&mut self, rng: &mut ChaCha8Rng) {
        let mut p = vec![0.0; N_PARAMS];
        // He-uniform for layers followed by ReLU, LeCun-uniform for the output
        let b1 = (6.0 / 9.0f64).sqrt();
        let b2 = (6.0 / (9 * C1) as f64).sqrt();
        let b3 = (3.0 / C2 as f64).sqrt();
        for v in &mut p[W1..B1] {
            *v = rng.gen_range(-b1..b1);
        }
        for v in &mut p[W2..B2] {
            *v = rng.gen_range(-b2..b2);
        }
        for v in &mut p[W3..B3] {
            *v = rng.gen_range(-b3..b3);
        }
        self.params = p;
    }

    fn forward(&self, x: &Encoded) -> Forward {
        let p = &self.params;
        let (h, w) = (x.rows, x.cols);
        let mut a1 = conv3x3(&x.data, 1, h, w, &p[W1..B1], &p[B1..W2], C1);
        relu(&mut a1);
        let p1 = maxpool2(&a1, C1, h, w);
        let mut a2 = conv3x3(&p1.out, C1, p1.h, p1.w, &p[W2..B2], &p[B2..W3], C2);
        relu(&mut a2);
        let p2 = maxpool2(&a2, C2, p1.h, p1.w);
        let area = (p2.h * p2.w) as f64;
        let g: Vec<f64> = p2
            .out
            .chunks(p2.h * p2.w)
            .map(|c| c.iter().sum::<f64>() / area)
            .collect();
        let z = g.iter().zip(&p[W3..B3]).map(|(a, b)| a * b).sum::<f64>() + p[B3];
        Forward { a1, p1, a2, p2, g, z }
    }
}

impl Classifier for ReferenceCnn {
    fn architecture(&self) -> Architecture {
        Architecture::ReferenceCnn
    }

    fn input_shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn initialize(&mut self, inputs: &[&Encoded], rng: &mut ChaCha8Rng) -> Result<()> {
        let shape = common_shape(inputs)?;
        self.init_params(rng);
        self.shape = Some(shape);
        Ok(())
    }

    fn encode(&self, image: &FeatureImage) -> Result<Encoded> {
        if image.rows < MIN_SIDE || image.cols < MIN_SIDE {
            return Err(Error::DimensionMismatch {
                expected: (MIN_SIDE, MIN_SIDE),
                found: (image.rows, image.cols),
            });
        }
        let data = if self.standardize {
            zscore(&image.values)
        } else {
            image.values.iter().map(|&v| v as f64).collect()
        };
        Ok(Encoded {
            shape: (image.rows, image.n_channels()),
            rows: image.rows,
            cols: image.cols,
            data,
        })
    }

    fn logit(&self, x: &Encoded) -> f64 {
        self.forward(x).z
    }

    fn loss_and_grad(&self, x: &Encoded, label: f64, grad: &mut [f64]) -> f64 {
        let p = &self.params;
        let f = self.forward(x);
        let (loss, dz) = bce_with_logit(f.z, label);
        let (h, w) = (x.rows, x.cols);

        grad[B3] += dz;
        for c in 0..C2 {
            grad[W3 + c] += dz * f.g[c];
        }
        let area = (f.p2.h * f.p2.w) as f64;
        let mut da2 = vec![0.0; f.a2.len()];
        for (k, &j) in f.p2.argmax.iter().enumerate() {
            let c = k / (f.p2.h * f.p2.w);
            if f.a2[j] > 0.0 {
                da2[j] += dz * p[W3 + c] / area;
            }
        }
        let mut dp1 = vec![0.0; f.p1.out.len()];
        let (gw2, rest) = grad[W2..].split_at_mut(B2 - W2);
        conv3x3_backward(
            &f.p1.out,
            C1,
            f.p1.h,
            f.p1.w,
            &p[W2..B2],
            C2,
            &da2,
            gw2,
            &mut rest[..C2],
            Some(&mut dp1),
        );
        let mut da1 = vec![0.0; f.a1.len()];
        for (k, &j) in f.p1.argmax.iter().enumerate() {
            if f.a1[j] > 0.0 {
                da1[j] += dp1[k];
            }
        }
        let (gw1, rest) = grad[W1..].split_at_mut(B1 - W1);
        conv3x3_backward(&x.data, 1, h, w, &p[W1..B1], C1, &da1, gw1, &mut rest[..C1], None);
        loss
    }

    fn clone_box(&self) -> Box<dyn Classifier> {
        Box::new(self.clone())
    }

    fn standardize(&self) -> bool {
        self.standardize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ic, oc, h, w) = (2, 3, 5, 7);
        let input: Vec<f64> = (0..ic * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wts: Vec<f64> = (0..oc * ic * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias = [0.1, -0.2, 0.3];
        let out = conv3x3(&input, ic, h, w, &wts, &bias, oc);
        for o in 0..oc {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut s = bias[o];
                    for i in 0..ic {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (iy, ix) = (y + ky - 1, x + kx - 1);
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    s += wts[((o * ic + i) * 3 + ky as usize) * 3 + kx as usize]
                                        * input[(i * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    let got = out[(o * h + y as usize) * w + x as usize];
                    assert!((got - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pooling_floors_odd_sides() {
        let input: Vec<f64> = (0..15).map(|v| v as f64).collect();
        let p = maxpool2(&input, 1, 3, 5);
        assert_eq!((p.h, p.w), (1, 2));
        assert_eq!(p.out, [6.0, 8.0]);
    }

    #[test]
    fn tiny_images_rejected() {
        let img = FeatureImage {
            rows: 3,
            cols: 8,
            frames_per_channel: 8,
            channels: vec!["a".into()],
            values: vec![0.0; 24],
        };
        assert!(ReferenceCnn::new(true).encode(&img).is_err());
    }
}
