//! Property checks shared by the integration tests and the acceptance target.
//! Each check returns a one-line summary on success and the first violation
//! on failure.
#![allow(dead_code)]

use a3d::configspace::{
    network_cost, network_cost_at, ArchSpec, LayerSpec, PathwayBody, PathwaySpec, ResidualSpec, SampledTriple, StageSpec, StemSpec,
};
use a3d::deploy::published::{
    PublishedGrid, PublishedList, SLOWFAST_NARROW_GRID, SLOWFAST_NARROW_LIST, SLOW_NARROW_GRID, SLOW_NARROW_LIST, SLOW_WIDE_GRID,
    SLOW_WIDE_LIST,
};
use a3d::deploy::{build_budget_table, calibrate_grid, calibration_entry, select_config, TradeoffRow};
use a3d::model::Net;
use a3d::multipath::{fuse, FusionBlock};
use a3d::nn::ops::{frame_indices, resize_spatial, select_frames};
use a3d::nn::ParamStore;
use a3d::slimnet::{Backbone, Ctx, SlimConv3d};
use a3d::training::{
    cross_entropy, kl_divergence, mutual_gradients, mutual_train_step, plain_gradients, plain_train_step, resample_clip, std_loss,
    MutualOptions, TermMask, TrainState,
};
use a3d::{A3dError, ComputeRange, Configuration, Model};
use ndarray::{Array2, Array5, ArrayD, Axis, Slice};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn cfg(w: f64, sp: f64, t: f64) -> Configuration {
    Configuration::new(w, sp, t).expect("valid configuration")
}

/// Independent width rule: round half up, at least one channel.
fn keep(channels: usize, gamma_w: f64) -> usize {
    ((gamma_w * channels as f64) + 0.5).floor().max(1.0) as usize
}

fn uniform_clip(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize, usize)) -> Array5<f64> {
    Array5::from_shape_simple_fn(shape, || rng.random_range(0.0..1.0))
}

// Cost model

pub const RELATIVE_ROWS: [f64; 6] = [41.7, 31.3, 20.9, 13.4, 5.3, 0.9];

pub fn cost_relative() -> Check {
    let arch = ArchSpec::slow8x8_r50();
    let mut worst = 0.0f64;
    for g in RELATIVE_ROWS {
        let row = SLOW_WIDE_LIST
            .rows
            .iter()
            .find(|r| r.gflops == g)
            .ok_or_else(|| format!("no published row at {g} GFLOPs"))?;
        let got = network_cost_at(&arch, row.gamma_w, row.frames, row.pixels).map_err(s)?.gflops();
        let e = rel(got, g);
        ensure!(
            e <= 0.08,
            "{}x{}^2 at gamma_w {}: {got:.2} GFLOPs vs published {g} ({:.1}%)",
            row.frames,
            row.pixels,
            row.gamma_w,
            100.0 * e
        );
        worst = worst.max(e);
    }
    let mut body = arch.clone();
    body.head = false;
    let base = network_cost_at(&body, 1.0, 8, 256).map_err(s)?.macs as f64;
    let mut worst_id = 0.0f64;
    for frames in 1..=8 {
        let ratio = network_cost_at(&body, 1.0, frames, 224).map_err(s)?.macs as f64 / base;
        let want = (224.0f64 / 256.0).powi(2) * frames as f64 / 8.0;
        let e = (ratio - want).abs();
        ensure!(e <= 1e-6, "{frames}x224^2 / 8x256^2 = {ratio} vs {want}");
        worst_id = worst_id.max(e);
    }
    Ok(format!(
        "worst row error {:.1}%; resolution ratio of the convolutional body exact to {worst_id:.1e}",
        100.0 * worst
    ))
}

pub fn params_check() -> Check {
    let arch = ArchSpec::slow8x8_r50();
    let half = network_cost(&arch, &cfg(0.5, 1.0, 1.0)).map_err(s)?.params as f64 / 1e6;
    ensure!(rel(half, 8.3) <= 0.05, "gamma_w 0.5: {half:.2}M params vs 8.3M");
    let narrow = ComputeRange::narrow(224, 8);
    ensure!(narrow.width_grid.contains(&0.73), "0.73 is not on the narrow width grid");
    let w73 = network_cost(&arch, &cfg(0.73, 1.0, 1.0)).map_err(s)?.params as f64 / 1e6;
    ensure!(rel(w73, 17.5) <= 0.05, "gamma_w 0.73: {w73:.2}M params vs 17.5M");
    Ok(format!("gamma_w 0.5: {half:.2}M; gamma_w 0.73: {w73:.2}M"))
}

/// Every layer slims both its input and output channels, so cost scales as
/// `γw²·γs²·γt` when all scaled sizes are integers.
pub fn all_scalable_arch() -> ArchSpec {
    let conv = |ci, co| LayerSpec::conv([3, 3, 3], ci, co, [1, 1, 1], true);
    ArchSpec {
        name: "all_scalable".into(),
        pathways: vec![PathwaySpec {
            name: "p".into(),
            adaptive: true,
            frame_ratio: 1,
            body: PathwayBody::Layers(vec![conv(20, 40), LayerSpec::bn(40, true), conv(40, 40), conv(40, 20)]),
        }],
        fusion_points: vec![],
        alpha: 1,
        beta: 0.0,
        base_spatial: 10,
        base_frames: 10,
        base_stride: 1,
        num_classes: 2,
        head: false,
    }
}

pub fn eq2_exactness(n: usize, seed: u64) -> Check {
    let arch = all_scalable_arch();
    let full = network_cost(&arch, &Configuration::FULL).map_err(s)?.macs as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let c = cfg(
            rng.random_range(1..=20) as f64 / 20.0,
            rng.random_range(1..=10) as f64 / 10.0,
            rng.random_range(1..=10) as f64 / 10.0,
        );
        let ratio = network_cost(&arch, &c).map_err(s)?.macs as f64 / full;
        let want = c.gamma_w.powi(2) * c.gamma_s.powi(2) * c.gamma_t;
        let e = (ratio - want).abs();
        ensure!(e <= 1e-9, "{c}: ratio {ratio} vs {want}");
        worst = worst.max(e);
    }
    Ok(format!("{n} configurations, worst deviation {worst:.1e}"))
}

pub fn training_cost(samples: usize, seed: u64) -> Check {
    let arch = ArchSpec::slow8x8_r50();
    let range = ComputeRange::wide(224, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let est = a3d::configspace::expected_training_cost(&arch, &range, samples, &mut rng).map_err(s)?;
    let crop = range.spatial_level(1.0).map_or(224, |l| l.pixels) as f64;
    let frames = range.temporal_level(1.0).map_or(8, |l| l.frames) as f64;
    let ms = range.spatial_grid.iter().map(|l| (l.pixels as f64 / crop).powi(2)).sum::<f64>() / range.spatial_grid.len() as f64;
    let mt = range.temporal_grid.iter().map(|l| l.frames as f64 / frames).sum::<f64>() / range.temporal_grid.len() as f64;
    let wmin = range.width_min();
    let ew2 = (1.0 - wmin.powi(3)) / (3.0 * (1.0 - wmin));
    ensure!((ew2 - 7.0 / 12.0).abs() < 1e-12, "E[gamma_w^2] = {ew2}, expected 7/12");
    let oracle = 1.0 + (ew2 + wmin * wmin) * ms * mt;
    let e = rel(est.ratio, oracle);
    ensure!(e <= 0.01, "Monte-Carlo ratio {:.4} vs closed form {oracle:.4} ({:.2}%)", est.ratio, 100.0 * e);
    Ok(format!(
        "Monte-Carlo {:.4}x vs closed form {oracle:.4}x ({:.2}% apart); published 1.6x reported only",
        est.ratio,
        100.0 * e
    ))
}

// Weight aliasing

/// Boolean masks over every parameter marking the entries a configuration of
/// width `gamma_w` reads, derived from layer specs alone.
pub fn active_masks(model: &Model<f64>, gamma_w: f64) -> Vec<ArrayD<bool>> {
    let mut masks: Vec<ArrayD<bool>> = model.params.iter().map(|p| ArrayD::from_elem(p.value.raw_dim(), false)).collect();
    let (backbones, fusions): (Vec<&Backbone>, Vec<&FusionBlock>) = match &model.net {
        Net::Slow(n) => (vec![&n.backbone], vec![]),
        Net::SlowFast(n) => (vec![&n.slow, &n.fast], n.fusions.iter().collect()),
    };
    for bb in backbones {
        let g = if bb.adaptive { gamma_w } else { 1.0 };
        for conv in bb.convs() {
            mark_conv(&mut masks, conv, g);
        }
        for bn in bb.norms() {
            let n = if bn.scalable { keep(bn.channels, g) } else { bn.channels };
            for id in [bn.scale, bn.shift] {
                masks[id.0].slice_axis_mut(Axis(0), Slice::from(..n)).fill(true);
            }
        }
    }
    for f in fusions {
        mark_conv(&mut masks, &f.conv, 1.0);
    }
    let head = model.head();
    let prefix = head.spec.in_channels - head.spec.fixed_in_tail;
    let k = keep(prefix, gamma_w);
    let w = &mut masks[head.weight.0];
    w.slice_axis_mut(Axis(1), Slice::from(..k)).fill(true);
    w.slice_axis_mut(Axis(1), Slice::from(prefix..)).fill(true);
    masks[head.bias.0].fill(true);
    masks
}

fn mark_conv(masks: &mut [ArrayD<bool>], conv: &SlimConv3d, g: f64) {
    let sp = &conv.spec;
    let co = if sp.width_scalable_out { keep(sp.out_channels, g) } else { sp.out_channels };
    let prefix = sp.in_channels - sp.fixed_in_tail;
    let ci = if sp.width_scalable_in { keep(prefix, g) } else { prefix };
    let mut w = masks[conv.weight.0].slice_axis_mut(Axis(0), Slice::from(..co));
    w.slice_axis_mut(Axis(1), Slice::from(..ci)).fill(true);
    w.slice_axis_mut(Axis(1), Slice::from(prefix..)).fill(true);
    if let Some(b) = conv.bias {
        masks[b.0].slice_axis_mut(Axis(0), Slice::from(..co)).fill(true);
    }
}

pub const ALIAS_WIDTHS: [f64; 3] = [0.5, 0.75, 1.0];

pub fn aliasing(steps: usize, seed: u64) -> Check {
    let archs = [ArchSpec::toy_slow_with([4, 8, 8, 8], 4), ArchSpec::toy_slowfast_with([8, 8, 8, 8], 4)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut touched, mut ran) = (0usize, 0usize);
    for (ai, arch) in archs.iter().enumerate() {
        let model = Model::<f64>::new(arch.clone(), seed + ai as u64).map_err(s)?;
        let masks = ALIAS_WIDTHS.map(|w| active_masks(&model, w));
        for (k, pair) in masks.windows(2).enumerate() {
            for (p, (a, b)) in model.params.iter().zip(pair[0].iter().zip(&pair[1])) {
                ensure!(
                    a.iter().zip(b).all(|(&x, &y)| !x || y),
                    "{}: {} is active at gamma_w {} but not at {}",
                    arch.name,
                    p.name,
                    ALIAS_WIDTHS[k],
                    ALIAS_WIDTHS[k + 1]
                );
            }
        }
        ensure!(masks[2].iter().all(|m| m.iter().all(|&x| x)), "{}: full width leaves parameters unused", arch.name);
        let mut state = TrainState::new(model, 0.0, 0.0);
        let (frames, px) = (state.model.clip_frames(), state.model.clip_pixels());
        let n = steps / archs.len() + usize::from(ai < steps % archs.len());
        for _ in 0..n {
            let wi = rng.random_range(0..ALIAS_WIDTHS.len());
            let c = cfg(ALIAS_WIDTHS[wi], [0.5, 0.75, 1.0][rng.random_range(0..3)], [0.5, 1.0][rng.random_range(0..2)]);
            let clip = uniform_clip(&mut rng, (2, 3, frames, px, px));
            let labels: Vec<usize> = (0..2).map(|_| rng.random_range(0..4)).collect();
            let before = state.model.params.clone();
            plain_train_step(&mut state, &clip, &labels, &c, 0.05).map_err(s)?;
            for ((p, q), m) in before.iter().zip(state.model.params.iter()).zip(&masks[wi]) {
                for ((&x, &y), &active) in p.value.iter().zip(&q.value).zip(m) {
                    if x != y {
                        ensure!(active, "{}: step at {c} changed inactive entry of {}", arch.name, p.name);
                        touched += 1;
                    }
                }
            }
            ran += 1;
        }
    }
    ensure!(touched > 0, "no parameter changed in {ran} steps");
    Ok(format!("{ran} steps, 0 violations, {touched} active entries updated"))
}

// Gradients

pub fn tiny_arch() -> ArchSpec {
    ArchSpec {
        name: "tiny".into(),
        pathways: vec![PathwaySpec {
            name: "slow".into(),
            adaptive: true,
            frame_ratio: 1,
            body: PathwayBody::Residual(ResidualSpec {
                stem: StemSpec {
                    out_channels: 2,
                    kernel: [3, 1, 1],
                    stride: [1, 2, 2],
                    pool: None,
                },
                stages: vec![StageSpec {
                    blocks: 1,
                    inner_channels: 3,
                    out_channels: 3,
                    temporal_kernel: 1,
                    spatial_stride: 2,
                    bottleneck: false,
                }],
            }),
        }],
        fusion_points: vec![],
        alpha: 1,
        beta: 0.0,
        base_spatial: 8,
        base_frames: 4,
        base_stride: 1,
        num_classes: 2,
        head: true,
    }
}

/// Tiny model with weights spread over `[-0.8, 0.8)` and a 3-clip batch.
fn tiny_setup(seed: u64) -> Result<(Model<f64>, Array5<f64>, Vec<usize>), String> {
    let mut model = Model::<f64>::new(tiny_arch(), seed).map_err(s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for p in model.params.iter_mut() {
        p.value.mapv_inplace(|_| rng.random_range(-0.8..0.8));
    }
    let x = uniform_clip(&mut rng, (3, 3, 4, 8, 8));
    Ok((model, x, vec![0, 1, 1]))
}

fn logits(model: &Model<f64>, x: &Array5<f64>, c: &Configuration) -> Array2<f64> {
    let input = model.input_for(x, c).expect("input");
    model.forward(&input, c, &mut Ctx::train()).expect("forward").0.logits
}

fn nudge(model: &mut Model<f64>, param: usize, index: usize, d: f64) {
    let p = model.params.iter_mut().nth(param).expect("parameter");
    *p.value.iter_mut().nth(index).expect("entry") += d;
}

/// Compares `analytic` with central differences of `loss` over every entry.
fn compare_fd(model: &mut Model<f64>, analytic: &ParamStore<f64>, loss: impl Fn(&Model<f64>) -> f64, h: f64) -> (f64, Option<String>) {
    let expected: Vec<Vec<f64>> = analytic.iter().map(|g| g.value.iter().copied().collect()).collect();
    let names: Vec<String> = model.params.iter().map(|p| p.name.clone()).collect();
    let mut worst = 0.0f64;
    let mut first = None;
    for (pi, name) in names.iter().enumerate() {
        for (k, &a) in expected[pi].iter().enumerate() {
            nudge(model, pi, k, h);
            let up = loss(model);
            nudge(model, pi, k, -2.0 * h);
            let down = loss(model);
            nudge(model, pi, k, h);
            let numeric = (up - down) / (2.0 * h);
            let e = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if e > worst {
                worst = e;
                first = Some(format!("{name}[{k}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    (worst, first)
}

pub fn gradient_check() -> Check {
    let (mut model, x, labels) = tiny_setup(11)?;
    let n = model.params.num_elements();
    ensure!(n <= 200, "{n} parameters");
    let configs = [Configuration::FULL, cfg(0.5, 0.75, 0.5), cfg(0.75, 0.5, 1.0)];
    let mut worst = 0.0f64;
    for c in &configs {
        let mut grads = model.params.zeros_like();
        plain_gradients(&model, &x, &labels, c, &mut grads).map_err(s)?;
        let (e, at) = compare_fd(&mut model, &grads, |m| cross_entropy(&logits(m, &x, c), &labels).expect("ce").0, 1e-5);
        ensure!(e <= 1e-4, "{c}: relative error {e:e} at {}", at.unwrap_or_default());
        worst = worst.max(e);
    }
    Ok(format!("{n} parameters at 3 configurations, worst relative error {worst:.1e}"))
}

// Distillation loss

pub fn std_loss_properties(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_logits = |b: usize, k: usize, scale: f64| Array2::from_shape_simple_fn((b, k), || rng.random_range(-scale..scale));
    let t = random_logits(6, 5, 4.0);
    let labels = [0, 1, 2, 3, 4, 0];
    let same = std_loss(&t, &[t.clone(), t.clone()], &labels).map_err(s)?;
    ensure!(same.kl.iter().all(|&k| k == 0.0), "KL of identical logits: {:?}", same.kl);
    ensure!(same.d_subs.iter().all(|d| d.iter().all(|&g| g == 0.0)), "nonzero student gradient at equality");
    for i in 0..200 {
        let full = random_logits(6, 5, 4.0);
        let subs = [random_logits(6, 5, 4.0), random_logits(6, 5, 0.5)];
        let l = std_loss(&full, &subs, &labels).map_err(s)?;
        ensure!(l.total >= l.ce, "trial {i}: total {} below CE {}", l.total, l.ce);
        ensure!((l.total - l.ce - l.kl.iter().sum::<f64>()).abs() < 1e-12, "trial {i}: total is not CE plus KL terms");
    }

    let (mut model, x, labels) = tiny_setup(23)?;
    let triple = SampledTriple {
        full: Configuration::FULL,
        random_sub: cfg(0.75, 0.5, 1.0),
        min_sub: cfg(0.5, 0.75, 0.5),
    };
    let mut kl_grads = model.params.zeros_like();
    let kl_only = TermMask { ce: false, kl: true };
    mutual_gradients(&model, &x, &labels, &triple, kl_only, &mut kl_grads).map_err(s)?;
    let teacher = logits(&model, &x, &triple.full);
    let detached = |m: &Model<f64>| -> f64 {
        triple.subs().iter().map(|c| kl_divergence(&teacher, &logits(m, &x, c)).expect("kl").0).sum()
    };
    let (e, at) = compare_fd(&mut model, &kl_grads, detached, 1e-5);
    ensure!(e <= 1e-4, "detached-teacher gradient off by {e:e} at {}", at.unwrap_or_default());
    let attached = |m: &Model<f64>| -> f64 {
        let t = logits(m, &x, &triple.full);
        triple.subs().iter().map(|c| kl_divergence(&t, &logits(m, &x, c)).expect("kl").0).sum()
    };
    let (leak, _) = compare_fd(&mut model, &kl_grads, attached, 1e-5);
    ensure!(leak > 1e-3, "gradient also matches a teacher that receives gradient ({leak:e})");

    let mut ce_grads = model.params.zeros_like();
    mutual_gradients(&model, &x, &labels, &triple, TermMask { ce: true, kl: false }, &mut ce_grads).map_err(s)?;
    let mut plain = model.params.zeros_like();
    plain_gradients(&model, &x, &labels, &Configuration::FULL, &mut plain).map_err(s)?;
    let same = ce_grads.iter().zip(plain.iter()).all(|(a, b)| a.value == b.value);
    ensure!(same, "CE term gradient differs from plain full-network training");
    Ok(format!("KL zero at equality, total >= CE over 200 trials, detached gradient error {e:.1e}"))
}

// Fusion

pub fn fusion(combos: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..combos {
        let alpha = [2, 4, 8][rng.random_range(0..3)];
        let beta = [0.125, 0.25, 0.5][rng.random_range(0..3)];
        let fast_c = rng.random_range(1..=4);
        let big_c = (fast_c as f64 / beta).round() as usize;
        let c = keep(big_c, [0.5, 0.63, 0.75, 1.0][rng.random_range(0..4)]);
        let slow_t = rng.random_range(1..=4);
        let t = keep(slow_t, [0.5, 1.0][rng.random_range(0..2)]);
        let fast_hw = rng.random_range(3..=9);
        let hw = keep(fast_hw, [0.57, 0.75, 1.0][rng.random_range(0..3)]);
        let b = rng.random_range(1..=3);
        let mut store = ParamStore::<f64>::new();
        let block = FusionBlock::new(&mut store, 0, fast_c, alpha, &mut rng);
        let fast = uniform_clip(&mut rng, (b, fast_c, alpha * slow_t, fast_hw, fast_hw));
        let slow = uniform_clip(&mut rng, (b, c, t, hw, hw));
        let (out, _) = fuse(&store, &block, &fast, slow.clone(), false).map_err(s)?;
        let tag = format!("combo {i} (alpha {alpha}, beta {beta}, C {big_c}, c {c})");
        ensure!(out.dim() == (b, c + 2 * fast_c, t, hw, hw), "{tag}: fused shape {:?}", out.dim());
        ensure!(out.slice_axis(Axis(1), Slice::from(..c)) == slow, "{tag}: slow channels altered");
        let lat = block.conv.forward(&store, &fast, 1.0).map_err(s)?;
        ensure!(lat.dim() == (b, 2 * fast_c, slow_t, fast_hw, fast_hw), "{tag}: lateral conv shape {:?}", lat.dim());
        let idx: Vec<usize> = (0..t).map(|k| k * slow_t / t).collect();
        let want = select_frames(resize_spatial(lat.view(), hw, hw).view(), &idx);
        ensure!(out.slice_axis(Axis(1), Slice::from(c..)) == want, "{tag}: Fast block is not the last 2*beta*C channels");
    }

    let arch = ArchSpec::toy_slowfast_with([8, 8, 16, 16], 4);
    let mut model = Model::<f64>::new(arch.clone(), seed).map_err(s)?;
    let Net::SlowFast(net) = &model.net else {
        return Err("toy_slowfast did not build two pathways".into());
    };
    for (k, &b) in arch.fusion_points.iter().enumerate() {
        let lateral = 2 * net.fast.boundary_channels[b];
        let first = &net.slow.stages[b][0];
        ensure!(first.units[0].conv.spec.fixed_in_tail == lateral, "stage {b}: post-fusion conv tail is not {lateral}");
        ensure!(net.fusions[k].out_channels() == lateral, "fusion {k}: {} output channels", net.fusions[k].out_channels());
    }
    let clip = uniform_clip(&mut rng, (2, 3, model.clip_frames(), model.clip_pixels(), model.clip_pixels()));
    let sub = cfg(0.5, 0.75, 0.5);
    let run = |m: &Model<f64>, c: &Configuration| logits(m, &clip, c);
    let (sub_before, full_before) = (run(&model, &sub), run(&model, &Configuration::FULL));
    ensure!(sub_before.dim() == (2, 4), "logits shape {:?}", sub_before.dim());
    permute_inactive_slow(&mut model, sub.gamma_w, &mut rng);
    ensure!(run(&model, &sub) == sub_before, "permuting inactive Slow channels changed sub-configuration logits");
    ensure!(run(&model, &Configuration::FULL) != full_before, "permutation did not touch the full network");

    let x = uniform_clip(&mut rng, (2, 3, 8, 12, 12));
    ensure!(resample_clip(&x, &Configuration::FULL) == x, "clip resampling at gamma = 1 is not the identity");
    ensure!(resize_spatial(x.view(), 12, 12) == x, "spatial resize to the same size is not the identity");
    ensure!(frame_indices(8, 8) == (0..8).collect::<Vec<_>>(), "frame selection at T' = T is not the identity");
    Ok(format!("{combos} fusion shapes, inactive-channel permutation bit-identical, gamma = 1 resampling exact"))
}

/// Shuffles, within every Slow convolution, normalization layer and the head,
/// the entries that a network of width `gamma_w` never reads.
fn permute_inactive_slow(model: &mut Model<f64>, gamma_w: f64, rng: &mut ChaCha8Rng) {
    let Net::SlowFast(net) = &model.net else { unreachable!() };
    let net = net.clone();
    let head = model.head().clone();
    let params = &mut model.params;
    for conv in net.slow.convs() {
        let sp = &conv.spec;
        let prefix = sp.in_channels - sp.fixed_in_tail;
        if sp.width_scalable_out {
            shuffle_range(params.get_mut(conv.weight), 0, keep(sp.out_channels, gamma_w), sp.out_channels, rng);
        }
        if sp.width_scalable_in {
            shuffle_range(params.get_mut(conv.weight), 1, keep(prefix, gamma_w), prefix, rng);
        }
    }
    for bn in net.slow.norms() {
        let a = keep(bn.channels, gamma_w);
        let mut perm: Vec<usize> = (a..bn.channels).collect();
        perm.shuffle(rng);
        for id in [bn.scale, bn.shift] {
            apply_perm(params.get_mut(id), 0, a, &perm);
        }
    }
    let prefix = head.spec.in_channels - head.spec.fixed_in_tail;
    shuffle_range(params.get_mut(head.weight), 1, keep(prefix, gamma_w), prefix, rng);
}

fn shuffle_range(a: &mut ArrayD<f64>, axis: usize, from: usize, to: usize, rng: &mut ChaCha8Rng) {
    let mut perm: Vec<usize> = (from..to).collect();
    perm.shuffle(rng);
    apply_perm(a, axis, from, &perm);
}

fn apply_perm(a: &mut ArrayD<f64>, axis: usize, from: usize, perm: &[usize]) {
    let src = a.clone();
    for (k, &p) in perm.iter().enumerate() {
        a.index_axis_mut(Axis(axis), from + k).assign(&src.index_axis(Axis(axis), p));
    }
}

// Calibration

fn moments_oracle(values: impl Iterator<Item = (usize, f64)>, channels: usize) -> (Vec<f64>, Vec<f64>) {
    let mut n = vec![0f64; channels];
    let mut mean = vec![0f64; channels];
    let mut m2 = vec![0f64; channels];
    for (c, v) in values {
        n[c] += 1.0;
        let d = v - mean[c];
        mean[c] += d / n[c];
        m2[c] += d * (v - mean[c]);
    }
    let var = m2.iter().zip(&n).map(|(m, k)| m / k).collect();
    (mean, var)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn calibration_oracle(seed: u64) -> Check {
    let mut model = Model::<f64>::new(ArchSpec::toy_slow_with([4, 8, 8, 8], 4), seed).map_err(s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (frames, px) = (model.clip_frames(), model.clip_pixels());
    let stream: Vec<Array5<f64>> = (0..3).map(|_| uniform_clip(&mut rng, (4, 3, frames, px, px))).collect();
    let configs = [Configuration::FULL, cfg(0.5, 0.57, 0.5), cfg(0.7, 0.71, 0.75)];
    let before = model.params.checksum();
    calibrate_grid(&mut model, &configs, &stream, 2).map_err(s)?;
    ensure!(model.params.checksum() == before, "calibration modified parameters");
    let Net::Slow(net) = &model.net else {
        return Err("toy_slow built two pathways".into());
    };
    let stem = &net.backbone.stem.conv;
    let mut worst = 0.0f64;
    for c in &configs {
        let entry = model.stats.get(c).map_err(s)?;
        let mut ys = Vec::new();
        for batch in &stream {
            let input = model.input_for(batch, c).map_err(s)?;
            ys.push(stem.forward(&model.params, &input.slow, c.gamma_w).map_err(s)?);
        }
        let channels = ys[0].dim().1;
        let values = ys.iter().flat_map(|y| y.indexed_iter().map(|((_, ch, _, _, _), &v)| (ch, v)));
        let (mean, var) = moments_oracle(values, channels);
        let e = max_diff(&mean, &entry.layers[0].mean).max(max_diff(&var, &entry.layers[0].var));
        ensure!(e <= 1e-5, "{c}: stem statistics differ from the streaming oracle by {e:e}");
        worst = worst.max(e);

        let per_batch: Vec<_> = stream
            .iter()
            .map(|b| calibration_entry(&model, c, std::slice::from_ref(b), 1))
            .collect::<a3d::Result<_>>()
            .map_err(s)?;
        for (li, pooled) in entry.layers.iter().enumerate() {
            let k = per_batch.len() as f64;
            let mean: Vec<f64> = (0..pooled.mean.len()).map(|ch| per_batch.iter().map(|p| p.layers[li].mean[ch]).sum::<f64>() / k).collect();
            let var: Vec<f64> = (0..pooled.mean.len())
                .map(|ch| {
                    per_batch.iter().map(|p| p.layers[li].var[ch] + p.layers[li].mean[ch].powi(2)).sum::<f64>() / k - mean[ch].powi(2)
                })
                .collect();
            let e = max_diff(&mean, &pooled.mean).max(max_diff(&var, &pooled.var));
            ensure!(e <= 1e-5, "{c}: layer {li} pooled statistics off by {e:e}");
            worst = worst.max(e);
        }
    }
    Ok(format!("{} configurations x {} layers, worst deviation {worst:.1e}, parameters unchanged", configs.len(), net.num_norms))
}

// Budget table

pub fn published_tables() -> Vec<(String, Vec<TradeoffRow>)> {
    let lists: [(&str, PublishedList); 3] = [("slow [0.016,1] list", SLOW_WIDE_LIST), ("slow [0.06,1] list", SLOW_NARROW_LIST), ("slowfast [0.06,1] list", SLOWFAST_NARROW_LIST)];
    let grids: [(&str, PublishedGrid); 3] = [("slow [0.016,1] grid", SLOW_WIDE_GRID), ("slow [0.06,1] grid", SLOW_NARROW_GRID), ("slowfast [0.06,1] grid", SLOWFAST_NARROW_GRID)];
    let mut out: Vec<(String, Vec<TradeoffRow>)> = lists.iter().map(|(n, l)| (n.to_string(), l.rows().expect("published list"))).collect();
    out.extend(grids.iter().map(|(n, g)| (n.to_string(), g.rows().expect("published grid"))));
    out
}

pub fn budget_oracle(budgets: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables = published_tables();
    for (name, rows) in &tables {
        let table = build_budget_table(name, [10, 3], rows).map_err(s)?;
        ensure!(table.is_pareto_monotone(), "{name}: table is not Pareto-monotone");
        let lo = rows.iter().map(|r| r.gflops).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.gflops).fold(0.0, f64::max);
        for _ in 0..budgets {
            let budget = (rng.random_range((0.5 * lo).ln()..(1.2 * hi).ln())).exp();
            let best = rows.iter().filter(|r| r.gflops <= budget).map(|r| r.top1).fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))));
            match (select_config(&table, budget), best) {
                (Ok(e), Some(top1)) => {
                    ensure!(e.gflops <= budget, "{name}: budget {budget:.3} picked {} GFLOPs", e.gflops);
                    ensure!(e.top1 == top1, "{name}: budget {budget:.3} picked top-1 {} but {top1} is feasible", e.top1);
                }
                (Err(A3dError::InfeasibleBudget { .. }), None) => {}
                (got, want) => return Err(format!("{name}: budget {budget:.3}: got {got:?}, brute force {want:?}")),
            }
        }
    }
    let rows = SLOW_NARROW_LIST.rows().map_err(s)?;
    let table = build_budget_table("slow8x8_r50", [10, 3], &rows).map_err(s)?;
    let e = select_config(&table, 10.0).map_err(s)?;
    ensure!(e.gflops == 7.3 && e.pixels == 178 && e.frames == 5, "budget 10 picked {} GFLOPs at {}x{}^2", e.gflops, e.frames, e.pixels);
    Ok(format!("{budgets} budgets on each of {} tables agree with brute force; budget 10 selects 7.3 GFLOPs", tables.len()))
}

// Degenerate sampling

pub fn degenerate_equivalence(steps: usize, seed: u64) -> Check {
    let arch = ArchSpec::toy_slow_with([4, 8, 8, 8], 4);
    let model = Model::<f32>::new(arch, seed).map_err(s)?;
    let (frames, px) = (model.clip_frames(), model.clip_pixels());
    let mut mutual = TrainState::new(model.clone(), 0.9, 1e-4);
    let mut plain = TrainState::new(model, 0.9, 1e-4);
    let range = ComputeRange::full_only(px, frames);
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed + 2);
    for step in 0..steps {
        let clip = Array5::from_shape_simple_fn((4, 3, frames, px, px), || data_rng.random_range(0.0f32..1.0));
        let labels: Vec<usize> = (0..4).map(|_| data_rng.random_range(0..4)).collect();
        let a = mutual_train_step(&mut mutual, &clip, &labels, &range, &mut sample_rng, 0.1, MutualOptions::default()).map_err(s)?;
        let b = plain_train_step(&mut plain, &clip, &labels, &Configuration::FULL, 0.1).map_err(s)?;
        ensure!(a.ce() == b.ce(), "step {step}: CE {} vs {}", a.ce(), b.ce());
        ensure!(a.kl().iter().all(|&k| k == 0.0), "step {step}: KL terms {:?}", a.kl());
        let same = mutual.model.params.iter().zip(plain.model.params.iter()).all(|(p, q)| p.value == q.value);
        ensure!(same, "step {step}: parameters diverged");
    }
    Ok(format!("{steps} steps, parameters and losses identical"))
}
