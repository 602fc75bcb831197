use altune_core::net::{backward, batch_loss, decode, decode_raw, encode, latent_gradient, Example, NetworkSpec, NetworkWeights};
use altune_core::{normalize, AxisPair, Extent, ImageGrid, LatentVector, MachineParams, ProjectionSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_scale_spec() -> NetworkSpec {
    // output scale 1 and unit-scale targets keep the loss O(1), so the
    // absolute floor below is meaningful
    NetworkSpec { output_scale: 1.0, ..NetworkSpec::default() }
}

fn random_example(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> (ImageGrid, MachineParams, ProjectionSet) {
    let n = spec.input_size;
    let img = normalize(&ImageGrid::new(n, n, (0..n * n).map(|_| rng.gen::<f64>()).collect(), Extent::symmetric(1.0, 1.0)).unwrap()).unwrap();
    let params = MachineParams(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
    let m = spec.output_size();
    let target = ProjectionSet::new(
        spec.channels
            .iter()
            .map(|&p| (p, ImageGrid::new(m, m, (0..m * m).map(|_| rng.gen::<f64>()).collect(), Extent::symmetric(5.0, 5.0)).unwrap()))
            .collect(),
    )
    .unwrap();
    (img, params, target)
}

#[test]
fn backward_matches_central_differences_on_random_weights() {
    let spec = unit_scale_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut w = NetworkWeights::init(&spec, 4).unwrap();
    let data: Vec<_> = (0..3).map(|_| random_example(&spec, &mut rng)).collect();
    let batch: Vec<Example<'_>> = data.iter().map(|(i, p, t)| Example { image: i, params: p, target: t }).collect();
    let (_, g) = backward(&batch, &w).unwrap();

    // sample weights from every layer so each layer type is exercised
    let plan = w.plan().clone();
    let mut picks = Vec::new();
    for l in plan.layers() {
        for _ in 0..8 {
            picks.push(l.w_offset + rng.gen_range(0..l.w_len));
        }
        picks.push(l.b_offset + rng.gen_range(0..l.b_len));
    }
    while picks.len() < 100 {
        picks.push(rng.gen_range(0..w.len()));
    }

    let h = 1e-5;
    let mut worst = 0.0f64;
    for &i in &picks {
        let orig = w.as_slice()[i];
        w.as_mut_slice()[i] = orig + h;
        let lp = batch_loss(&batch, &w).unwrap();
        w.as_mut_slice()[i] = orig - h;
        let lm = batch_loss(&batch, &w).unwrap();
        w.as_mut_slice()[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        let an = g.data[i];
        let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-2);
        worst = worst.max(err);
        assert!(
            (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()) || (fd - an).abs() <= 1e-6,
            "weight {i}: analytic {an:e} vs central difference {fd:e}"
        );
    }
    assert!(worst < 1e-4);
}

#[test]
fn decoder_directional_derivative_matches_backprop() {
    let spec = NetworkSpec::default();
    let w = NetworkWeights::init(&spec, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = LatentVector((0..spec.latent_dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let base = decode_raw(&p, &w).unwrap();
    let probe: Vec<f64> = (0..base.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let vjp = latent_gradient(&p, &w, &probe).unwrap();
    let eps = 1e-6;
    for i in 0..spec.latent_dim {
        let mut pp = p.clone();
        pp.0[i] += eps;
        let mut pm = p.clone();
        pm.0[i] -= eps;
        let up = decode_raw(&pp, &w).unwrap();
        let dn = decode_raw(&pm, &w).unwrap();
        let fd: f64 = probe.iter().zip(up.iter().zip(&dn)).map(|(g, (a, b))| g * (a - b) / (2.0 * eps)).sum();
        assert!((fd - vjp[i]).abs() <= 1e-4 * fd.abs().max(vjp[i].abs()).max(1e-6), "{i}: {fd:e} vs {:e}", vjp[i]);
        // shrinking the step shrinks the change: continuity
        let small: f64 = up.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(small < 1e-3);
    }
}

#[test]
fn training_is_bit_reproducible_per_seed() {
    let spec = NetworkSpec::default();
    let a = NetworkWeights::init(&spec, 77).unwrap();
    let b = NetworkWeights::init(&spec, 77).unwrap();
    assert_eq!(a.as_slice(), b.as_slice());
}

prop_compose! {
    fn small_spec()(
        input in 4usize..12,
        convs in prop::collection::vec(1usize..4, 0..3),
        enc in prop::collection::vec(1usize..6, 0..2),
        latent in 1usize..5,
        dec in prop::collection::vec(1usize..6, 0..2),
        reshape in 1usize..4,
        rc in 1usize..3,
        tconvs in prop::collection::vec(1usize..3, 0..2),
        full in any::<bool>(),
    ) -> NetworkSpec {
        let channels = if full { vec![AxisPair::X_XP, AxisPair::Y_YP, AxisPair::Z_E] } else { vec![AxisPair::Z_E] };
        NetworkSpec {
            input_size: input,
            conv_filters: convs,
            encoder_dense: enc,
            latent_dim: latent,
            decoder_dense: dec,
            reshape_size: reshape,
            reshape_channels: rc,
            tconv_filters: tconvs,
            channels,
            ..NetworkSpec::default()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn encode_decode_shapes_follow_the_spec(spec in small_spec(), seed in 0u64..1000) {
        let w = NetworkWeights::init(&spec, seed).unwrap();
        let n = spec.input_size;
        let img = ImageGrid::new(n, n, vec![1.0 / (n * n) as f64; n * n], Extent::symmetric(1.0, 1.0)).unwrap();
        let v = encode(&img, &MachineParams::NEUTRAL, &w).unwrap();
        prop_assert_eq!(v.len(), spec.latent_dim);
        let out = decode(&v, &w).unwrap();
        prop_assert_eq!(out.len(), spec.channels.len());
        prop_assert_eq!(out.shape(), (spec.output_size(), spec.output_size()));
        prop_assert!(out.iter().all(|(_, g)| g.pixels().iter().all(|&p| p >= 0.0 && p.is_finite())));
    }
}
