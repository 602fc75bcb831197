//! Encoder, latent injection, decoder and their backward passes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{mse_slices, Extent, ImageGrid, ProjectionSet};
use crate::net::layers::{conv_affine, conv_backward, dense_affine, dense_backward, tconv_affine, tconv_backward, ConvGeom, TConvGeom};
use crate::net::spec::{LayerKind, LayerShape, NetworkSpec};
use crate::net::weights::{Gradients, NetworkWeights};
use crate::params::{LatentVector, MachineParams};

/// One supervised example.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub image: &'a ImageGrid,
    pub params: &'a MachineParams,
    pub target: &'a ProjectionSet,
}

impl<'a> From<&'a crate::beamsim::SampleRecord> for Example<'a> {
    fn from(r: &'a crate::beamsim::SampleRecord) -> Self {
        Example { image: &r.input, params: &r.params, target: &r.outputs }
    }
}

struct Cached {
    input: Vec<f64>,
    z: Vec<f64>,
}

fn forward_layer(l: &LayerShape, w: &NetworkWeights, x: &[f64]) -> Cached {
    let (wt, b) = w.layer(l);
    let mut z = vec![0.0; l.out_len()];
    match l.kind {
        LayerKind::Conv { in_c, out_c, in_h, in_w, stride } => {
            conv_affine(&ConvGeom { in_c, out_c, in_h, in_w, stride }, x, wt, b, &mut z)
        }
        LayerKind::TConv { in_c, out_c, in_h, in_w } => {
            tconv_affine(&TConvGeom { in_c, out_c, in_h, in_w }, x, wt, b, &mut z)
        }
        LayerKind::Dense { n_in, n_out } => dense_affine(n_in, n_out, x, wt, b, &mut z),
    }
    Cached { input: x.to_vec(), z }
}

fn activate(l: &LayerShape, c: &Cached) -> Vec<f64> {
    c.z.iter().map(|&z| l.activation.apply(z)).collect()
}

/// Back through one layer; returns `d input` when asked for it.
fn backward_layer(
    l: &LayerShape,
    w: &NetworkWeights,
    c: &Cached,
    dout: &[f64],
    grads: Option<&mut Gradients>,
    want_dinput: bool,
) -> Option<Vec<f64>> {
    let dz: Vec<f64> = dout.iter().zip(&c.z).map(|(g, &z)| g * l.activation.derivative(z)).collect();
    let (wt, _) = w.layer(l);
    let mut dinput = want_dinput.then(|| vec![0.0; l.in_len()]);
    let mut scratch;
    let (dw, db) = match grads {
        Some(g) => g.layer_mut(l),
        None => {
            // weight gradients still need somewhere to go
            scratch = (vec![0.0; l.w_len], vec![0.0; l.b_len]);
            (&mut scratch.0[..], &mut scratch.1[..])
        }
    };
    match l.kind {
        LayerKind::Conv { in_c, out_c, in_h, in_w, stride } => conv_backward(
            &ConvGeom { in_c, out_c, in_h, in_w, stride },
            &c.input,
            wt,
            &dz,
            dw,
            db,
            dinput.as_deref_mut(),
        ),
        LayerKind::TConv { in_c, out_c, in_h, in_w } => tconv_backward(
            &TConvGeom { in_c, out_c, in_h, in_w },
            &c.input,
            wt,
            &dz,
            dw,
            db,
            dinput.as_deref_mut(),
        ),
        LayerKind::Dense { n_in, n_out } => {
            dense_backward(n_in, n_out, &c.input, wt, &dz, dw, db, dinput.as_deref_mut())
        }
    }
    dinput
}

fn check_image(spec: &NetworkSpec, image: &ImageGrid) -> Result<()> {
    if image.width() != spec.input_size || image.height() != spec.input_size {
        return Err(Error::ShapeMismatch(format!(
            "input image is {}x{}, network expects {}x{}",
            image.width(),
            image.height(),
            spec.input_size,
            spec.input_size
        )));
    }
    Ok(())
}

fn check_latent(spec: &NetworkSpec, p: &[f64]) -> Result<()> {
    if p.len() != spec.latent_dim {
        return Err(Error::LengthMismatch { expected: spec.latent_dim, found: p.len() });
    }
    Ok(())
}

struct EncoderTrace {
    layers: Vec<Cached>,
    latent: Vec<f64>,
}

fn encoder_forward(w: &NetworkWeights, image: &ImageGrid, params: &MachineParams) -> Result<EncoderTrace> {
    let spec = w.spec();
    check_image(spec, image)?;
    let plan = w.plan();
    let mut layers = Vec::with_capacity(plan.encoder_convs.len() + plan.encoder_dense.len());
    let mut x: Vec<f64> = image.pixels().iter().map(|p| p * spec.input_scale).collect();
    for l in &plan.encoder_convs {
        let c = forward_layer(l, w, &x);
        x = activate(l, &c);
        layers.push(c);
    }
    x.extend_from_slice(params.as_slice());
    for l in &plan.encoder_dense {
        let c = forward_layer(l, w, &x);
        x = activate(l, &c);
        layers.push(c);
    }
    Ok(EncoderTrace { layers, latent: x })
}

struct DecoderTrace {
    layers: Vec<Cached>,
    output: Vec<f64>,
}

fn decoder_forward(w: &NetworkWeights, p: &[f64]) -> Result<DecoderTrace> {
    check_latent(w.spec(), p)?;
    let plan = w.plan();
    let mut layers = Vec::with_capacity(plan.decoder_dense.len() + plan.decoder_tconvs.len());
    let mut x = p.to_vec();
    for l in plan.decoder_dense.iter().chain(&plan.decoder_tconvs) {
        let c = forward_layer(l, w, &x);
        x = activate(l, &c);
        layers.push(c);
    }
    let scale = w.spec().output_scale;
    x.iter_mut().for_each(|v| *v *= scale);
    Ok(DecoderTrace { layers, output: x })
}

/// Back through the decoder from `d output`; returns `d p_L`.
fn decoder_backward(w: &NetworkWeights, trace: &DecoderTrace, dout: &[f64], mut grads: Option<&mut Gradients>) -> Vec<f64> {
    let plan = w.plan();
    let scale = w.spec().output_scale;
    let mut d: Vec<f64> = dout.iter().map(|g| g * scale).collect();
    let shapes: Vec<&LayerShape> = plan.decoder_dense.iter().chain(&plan.decoder_tconvs).collect();
    for (l, c) in shapes.iter().zip(&trace.layers).rev() {
        d = backward_layer(l, w, c, &d, grads.as_deref_mut(), true).expect("d input requested");
    }
    d
}

fn encoder_backward(w: &NetworkWeights, trace: &EncoderTrace, dlatent: &[f64], grads: &mut Gradients) {
    let plan = w.plan();
    let n_conv = plan.encoder_convs.len();
    let mut d = dlatent.to_vec();
    for (l, c) in plan.encoder_dense.iter().zip(&trace.layers[n_conv..]).rev() {
        d = backward_layer(l, w, c, &d, Some(grads), true).expect("d input requested");
    }
    // drop the gradient wrt the machine parameters
    d.truncate(plan.conv_out_len(w.spec()));
    for (i, (l, c)) in plan.encoder_convs.iter().zip(&trace.layers[..n_conv]).enumerate().rev() {
        d = match backward_layer(l, w, c, &d, Some(grads), i > 0) {
            Some(next) => next,
            None => break,
        };
    }
}

/// Latent code `v_L` of an input image and machine setting.
pub fn encode(image: &ImageGrid, params: &MachineParams, w: &NetworkWeights) -> Result<LatentVector> {
    Ok(LatentVector(encoder_forward(w, image, params)?.latent))
}

/// `p_L = v_L + v_Lc`.
pub fn inject_latent(v_l: &LatentVector, v_lc: &LatentVector) -> Result<LatentVector> {
    v_l.checked_add(v_lc)
}

/// Raw decoder output, channel-major `N_c x N_im x N_im`.
pub fn decode_raw(p_l: &LatentVector, w: &NetworkWeights) -> Result<Vec<f64>> {
    Ok(decoder_forward(w, p_l.as_slice())?.output)
}

/// Projection stack predicted from `p_L`, one channel per configured pair.
pub fn decode(p_l: &LatentVector, w: &NetworkWeights) -> Result<ProjectionSet> {
    let raw = decode_raw(p_l, w)?;
    to_projection_set(w.spec(), raw)
}

fn to_projection_set(spec: &NetworkSpec, raw: Vec<f64>) -> Result<ProjectionSet> {
    let n = spec.output_size();
    let plane = n * n;
    let mut channels = Vec::with_capacity(spec.n_channels());
    for (k, &pair) in spec.channels.iter().enumerate() {
        let a = spec.axis_extents[pair.first().index()];
        let b = spec.axis_extents[pair.second().index()];
        let px = raw[k * plane..(k + 1) * plane].to_vec();
        if let Some(bad) = px.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("decoder produced {bad} in channel {pair}")));
        }
        channels.push((pair, ImageGrid::new(n, n, px, Extent::new(a.0, a.1, b.0, b.1))?));
    }
    ProjectionSet::new(channels)
}

/// `Jᵀ g` for the decoder Jacobian at `p_L`, i.e. the gradient of
/// `Σ g ⊙ decode_raw(p_L)` with respect to `p_L`.
pub fn latent_gradient(p_l: &LatentVector, w: &NetworkWeights, out_grad: &[f64]) -> Result<Vec<f64>> {
    let trace = decoder_forward(w, p_l.as_slice())?;
    if out_grad.len() != trace.output.len() {
        return Err(Error::LengthMismatch { expected: trace.output.len(), found: out_grad.len() });
    }
    Ok(decoder_backward(w, &trace, out_grad, None))
}

/// Flattened targets in network channel order.
fn target_vector(spec: &NetworkSpec, target: &ProjectionSet) -> Result<Vec<f64>> {
    let n = spec.output_size();
    let mut out = Vec::with_capacity(spec.n_channels() * n * n);
    for &pair in &spec.channels {
        let img = target
            .get(pair)
            .ok_or_else(|| Error::ShapeMismatch(format!("target lacks channel {pair}")))?;
        if img.width() != n || img.height() != n {
            return Err(Error::ShapeMismatch(format!(
                "target channel {pair} is {}x{}, network emits {n}x{n}",
                img.width(),
                img.height()
            )));
        }
        out.extend_from_slice(img.pixels());
    }
    Ok(out)
}

/// Training loss of one example: the mean over channels of the per-channel
/// mse, measured in output units (pixel values divided by `output_scale`),
/// so a unit-mass image has mean pixel 1 and losses are O(1).
pub fn example_loss(ex: &Example<'_>, w: &NetworkWeights) -> Result<f64> {
    let spec = w.spec();
    let target = target_vector(spec, ex.target)?;
    let v = encoder_forward(w, ex.image, ex.params)?.latent;
    let out = decoder_forward(w, &v)?.output;
    Ok(mse_slices(&out, &target) * loss_unit(spec))
}

/// Factor converting image mse into training-loss units.
pub fn loss_unit(spec: &NetworkSpec) -> f64 {
    1.0 / (spec.output_scale * spec.output_scale)
}

/// Mean example loss over a batch.
pub fn batch_loss(batch: &[Example<'_>], w: &NetworkWeights) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let l = example_loss(ex, w)?;
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { sample: i });
        }
        total += l;
    }
    Ok(total / batch.len() as f64)
}

/// Loss and its exact gradient with respect to every weight, for the batch
/// mean of [`example_loss`] (with `v_Lc = 0`).
pub fn backward(batch: &[Example<'_>], w: &NetworkWeights) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let spec = w.spec();
    let mut grads = Gradients::zeros_like(w);
    let mut total = 0.0;
    let inv_batch = 1.0 / batch.len() as f64;
    for (i, ex) in batch.iter().enumerate() {
        let target = target_vector(spec, ex.target)?;
        let enc = encoder_forward(w, ex.image, ex.params)?;
        let dec = decoder_forward(w, &enc.latent)?;
        let loss = mse_slices(&dec.output, &target) * loss_unit(spec);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { sample: i });
        }
        total += loss;
        let k = 2.0 * inv_batch * loss_unit(spec) / target.len() as f64;
        let dout: Vec<f64> = dec.output.iter().zip(&target).map(|(o, t)| k * (o - t)).collect();
        let dlatent = decoder_backward(w, &dec, &dout, Some(&mut grads));
        encoder_backward(w, &enc, &dlatent, &mut grads);
    }
    Ok((total * inv_batch, grads))
}
