//! Loop-based reference implementation of the classifier, written directly
//! from the layer definitions with no shared code.

#![allow(dead_code)]

use oam_core::network::{Activation, Architecture, Network};

/// `(height, width, channels)` map stored row-major.
#[derive(Debug, Clone)]
pub struct Map {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn at(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }
}

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Relu => v.max(0.0),
        Activation::Identity => v,
    }
}

pub fn conv(
    input: &Map,
    weight: &[f64],
    bias: &[f64],
    kh: usize,
    kw: usize,
    cout: usize,
    a: Activation,
) -> Map {
    let (oh, ow) = (input.h - kh + 1, input.w - kw + 1);
    let mut data = vec![0.0; oh * ow * cout];
    for y in 0..oh {
        for x in 0..ow {
            for co in 0..cout {
                let mut s = bias[co];
                for dy in 0..kh {
                    for dx in 0..kw {
                        for ci in 0..input.c {
                            s += input.at(y + dy, x + dx, ci)
                                * weight[((dy * kw + dx) * input.c + ci) * cout + co];
                        }
                    }
                }
                data[(y * ow + x) * cout + co] = act(a, s);
            }
        }
    }
    Map {
        h: oh,
        w: ow,
        c: cout,
        data,
    }
}

pub fn pool(input: &Map, size: usize, stride: usize) -> Map {
    let ph = (input.h - size) / stride + 1;
    let pw = (input.w - size) / stride + 1;
    let mut data = vec![0.0; ph * pw * input.c];
    for y in 0..ph {
        for x in 0..pw {
            for ch in 0..input.c {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..size {
                    for dx in 0..size {
                        m = m.max(input.at(y * stride + dy, x * stride + dx, ch));
                    }
                }
                data[(y * pw + x) * input.c + ch] = m;
            }
        }
    }
    Map {
        h: ph,
        w: pw,
        c: input.c,
        data,
    }
}

pub fn dense(input: &[f64], weight: &[f64], bias: &[f64], a: Option<Activation>) -> Vec<f64> {
    let n_out = bias.len();
    (0..n_out)
        .map(|j| {
            let s = bias[j]
                + input
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * weight[i * n_out + j])
                    .sum::<f64>();
            a.map_or(s, |a| act(a, s))
        })
        .collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Every intermediate output of the reference forward pass.
pub struct Trace {
    pub conv: Vec<Map>,
    pub pooled: Vec<Map>,
    pub hidden: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

pub fn forward(net: &Network<f64>, input: &[f64]) -> Trace {
    let arch: &Architecture = net.architecture();
    let w = net.weights();
    let mut cur = Map {
        h: arch.input_height,
        w: arch.input_width,
        c: 1,
        data: input.to_vec(),
    };
    let (mut convs, mut pools) = (Vec::new(), Vec::new());
    for (spec, layer) in arch.conv.iter().zip(&w.conv) {
        let c = conv(
            &cur,
            layer.weight.data(),
            layer.bias.data(),
            spec.kernel_height,
            spec.kernel_width,
            spec.filters,
            arch.activation,
        );
        let p = pool(&c, arch.pool.size, arch.pool.stride);
        convs.push(c);
        pools.push(p.clone());
        cur = p;
    }
    let mut v = cur.data;
    let mut hidden = Vec::new();
    let last = w.dense.len() - 1;
    for (i, layer) in w.dense.iter().enumerate() {
        let a = if i < last {
            Some(arch.activation)
        } else {
            None
        };
        v = dense(&v, layer.weight.data(), layer.bias.data(), a);
        if i < last {
            hidden.push(v.clone());
        }
    }
    Trace {
        conv: convs,
        pooled: pools,
        hidden,
        logits: v,
    }
}

/// Cross-entropy of one sample, from its logits, as a plain double loop.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let p = softmax(logits);
    let mut l = 0.0;
    for (j, pj) in p.iter().enumerate() {
        let y = if j == label { 1.0 } else { 0.0 };
        l -= y * pj.max(1e-12).ln();
    }
    l
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
