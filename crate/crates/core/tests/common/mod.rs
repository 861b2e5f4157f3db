//! Oracles shared by the integration tests.

#![allow(dead_code)]

use perceptloco::perception::autoencoder::{EncoderNetwork, ForwardPass};

/// `loss(theta + h e_idx) - loss(theta)`, propagated as a difference through
/// the network so that no large, nearly equal losses are subtracted.
///
/// For tanh layers the activation change uses the exact identity
/// `tanh(z + d) - tanh(z) = tanh(d) (1 - t^2) / (1 + t tanh(d))`.
pub fn loss_delta(net: &EncoderNetwork, pass: &ForwardPass, idx: usize, h: f64) -> f64 {
    let layers = net.layers();
    let mut rem = idx;
    let mut l = 0;
    loop {
        let n = layers[l].weights.len() + layers[l].bias.len();
        if rem < n {
            break;
        }
        rem -= n;
        l += 1;
    }
    let layer = &layers[l];
    let prev = if l == 0 { &pass.input } else { &pass.activations[l - 1] };
    let mut dz = vec![0.0; layer.outputs];
    if rem < layer.weights.len() {
        dz[rem / layer.inputs] = h * prev[rem % layer.inputs];
    } else {
        dz[rem - layer.weights.len()] = h;
    }
    let last = layers.len() - 1;
    for li in l..=last {
        if li > l {
            let w = &layers[li];
            let da = dz;
            dz = (0..w.outputs)
                .map(|i| (0..w.inputs).map(|k| w.weights[i * w.inputs + k] * da[k]).sum())
                .collect();
        }
        if li != last {
            let t = &pass.activations[li];
            dz = dz
                .iter()
                .zip(t)
                .map(|(&d, &t)| {
                    let td = d.tanh();
                    td * (1.0 - t * t) / (1.0 + t * td)
                })
                .collect();
        }
    }
    let r = pass.reconstruction();
    dz.iter()
        .zip(r)
        .zip(&pass.input)
        .map(|((d, r), x)| d * (2.0 * (r - x) + d))
        .sum::<f64>()
        / r.len() as f64
}

/// Central difference `(L(theta + h) - L(theta - h)) / 2h` for one parameter.
pub fn central_difference(net: &EncoderNetwork, pass: &ForwardPass, idx: usize, h: f64) -> f64 {
    (loss_delta(net, pass, idx, h) - loss_delta(net, pass, idx, -h)) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Largest relative error between the analytic gradient and central
/// differences, over every parameter (or every `stride`-th one).
pub fn max_gradient_error(net: &EncoderNetwork, pass: &ForwardPass, analytic: &[f64], stride: usize) -> f64 {
    (0..net.num_parameters())
        .step_by(stride.max(1))
        .map(|i| relative_error(analytic[i], central_difference(net, pass, i, 1e-5)))
        .fold(0.0, f64::max)
}

/// Plane-intersection distance for a ray from height `z` above flat ground.
pub fn flat_ground_range(z: f64, dir: [f64; 3]) -> f64 {
    z / -dir[2]
}
