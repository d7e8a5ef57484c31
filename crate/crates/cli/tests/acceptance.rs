//! Acceptance run: one line per criterion, exit status 1 if any fails.
//!
//! Criterion 6 needs a full TESS corpus; point `SER_TESS_ROOT` at it to run
//! it, otherwise it is reported as SKIP.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{check_tensor, linear_loss, probe, probe_tensor, tiny_config};
use ser_core::audio::AudioClip;
use ser_core::augment::{add_noise, pitch_shift};
use ser_core::dsp::{power_spectrum, DctMatrix, DspConfig, MelFilterBank, MfccExtractor, hz_to_mel};
use ser_core::learn::{evaluate, softmax_cross_entropy, train, Sample, TrainConfig};
use ser_core::nn::*;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run(id: u32, title: &str, budget: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = f();
    let took = start.elapsed();
    let verdict = match verdict {
        Verdict::Pass(d) if took > budget => Verdict::Fail(format!("{d}; over the {budget:?} budget")),
        v => v,
    };
    let (tag, detail, ok) = match verdict {
        Verdict::Pass(d) => ("PASS", d, true),
        Verdict::Fail(d) => ("FAIL", d, false),
        Verdict::Skip(d) => ("SKIP", d, true),
    };
    println!("[{tag}] {id}. {title} ({:.2}s): {detail}", took.as_secs_f64());
    ok
}

fn verdict(c: Check) -> Verdict {
    match c {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

// 1 ------------------------------------------------------------------------

fn dsp_oracles() -> Check {
    const N: usize = 512;
    let mut worst_plancherel: f64 = 0.0;
    for frame in 0..1000 {
        let x = probe(N, 10_000 + frame);
        let time: f64 = x.iter().map(|v| v * v).sum();
        let spec = power_spectrum(&x, 16_000.0);
        let freq = spec.full_energy() / N as f64;
        worst_plancherel = worst_plancherel.max((time - freq).abs() / time);
    }
    ensure(worst_plancherel < 1e-9, format!("Plancherel rel err {worst_plancherel:e}"))?;

    let cfg = DspConfig::default();
    let bank = MelFilterBank::new(&cfg, 16_000).map_err(|e| e.to_string())?;
    // centers from the mel formula, within one bin of where the bank put them
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    for (i, &c) in bank.center_bins().iter().enumerate() {
        let m = lo + (hi - lo) * (i + 1) as f64 / (cfg.n_mels + 1) as f64;
        let hz = 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        ensure((c as f64 - hz / bank.bin_hz()).abs() <= 1.0, format!("filter {i} centered at bin {c}, mel grid says {hz} Hz"))?;
    }
    let first = bank.center_bins()[0];
    let last = *bank.center_bins().last().unwrap();
    let mut worst_unity: f64 = 0.0;
    for bin in first..=last {
        let s: f64 = bank.weights.iter().map(|row| row[bin]).sum();
        worst_unity = worst_unity.max((s - 1.0).abs());
    }
    ensure(worst_unity < 1e-9, format!("partition of unity err {worst_unity:e}"))?;

    let k = cfg.n_mels;
    let dct = DctMatrix::new(k - 1, k);
    let mut worst_dct: f64 = 0.0;
    for i in 0..dct.basis.len() {
        for j in 0..=i {
            let dot: f64 = dct.basis[i].iter().zip(&dct.basis[j]).map(|(a, b)| a * b).sum();
            let want = if i == j { k as f64 / 2.0 } else { 0.0 };
            worst_dct = worst_dct.max((dot - want).abs());
        }
    }
    ensure(worst_dct < 1e-10, format!("DCT orthogonality err {worst_dct:e}"))?;

    let mut worst_const: f64 = 0.0;
    for level in [-23.0259, -3.5, 0.0, 1.0, 17.25] {
        let c = DctMatrix::new(cfg.n_coeff, k).project(&vec![level; k]);
        worst_const = c.iter().fold(worst_const, |w, v| w.max(v.abs()));
    }
    let silence = MfccExtractor::new(&cfg, 16_000)
        .and_then(|e| e.extract(&AudioClip::new(vec![0.0; 48_000], 16_000)))
        .map_err(|e| e.to_string())?;
    worst_const = silence.data.iter().fold(worst_const, |w, v| w.max(v.abs()));
    ensure(worst_const < 1e-9, format!("constant log-mel gave |c| up to {worst_const:e}"))?;

    Ok(format!(
        "Plancherel {worst_plancherel:.1e}, unity {worst_unity:.1e} over bins {first}..={last}, DCT {worst_dct:.1e}, constant {worst_const:.1e}"
    ))
}

// 2 ------------------------------------------------------------------------

fn demo_spectra() -> Check {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_ser"))
        .args(["demo-spectra", "--out-dir"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("exit {:?}", out.status.code()))?;
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    let want = [3i64, 16, 32, 64];
    for name in ["raw", "pre_emphasized", "windowed"] {
        let line = text
            .lines()
            .find(|l| l.starts_with(&format!("{name}:")))
            .ok_or(format!("no report for {name}"))?;
        let inner = line.split_once('[').and_then(|(_, r)| r.split_once(']')).ok_or("no peak list")?.0;
        let mut peaks: Vec<i64> = inner.split(", ").map(|s| s.parse().unwrap_or(-100)).collect();
        peaks.sort();
        ensure(
            peaks.len() == 4 && peaks.iter().zip(want).all(|(p, w)| (p - w).abs() <= 1),
            format!("{name} peaks {peaks:?}"),
        )?;
    }
    // ordering from the CSV itself, not the printed report
    let csv = std::fs::read_to_string(dir.path().join("pre_emphasized.csv")).map_err(|e| e.to_string())?;
    let power: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let at = |b: usize| power[b - 1..=b + 1].iter().cloned().fold(f64::MIN, f64::max);
    let p = [at(64), at(32), at(16), at(3)];
    ensure(p.windows(2).all(|w| w[0] > w[1]), format!("pre-emphasized powers 2000/1000/500/100 Hz: {p:?}"))?;
    let top = (0..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap();
    ensure(top == 64, format!("pre-emphasized maximum at bin {top}"))?;
    Ok("peaks {3,16,32,64} in all three spectra; 2000 > 1000 > 500 > 100 Hz after pre-emphasis".into())
}

// 3 ------------------------------------------------------------------------

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn layer_errors() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();

    let mut conv = Conv1d::new(3, 4, 7, &mut rng(1)).unwrap();
    let x = probe_tensor(&[2, 3, 8], 2);
    let r = probe_tensor(&[2, 4, 8], 3);
    let (_, cache) = conv.forward(&x).unwrap();
    let dx = conv.backward(&cache, &r).unwrap();
    let loss = |c: &mut Conv1d| linear_loss(&c.forward(&x).unwrap().0, &r);
    let (gw, gb) = (conv.weight.grad.clone().unwrap(), conv.bias.grad.clone().unwrap());
    let mut e = check_tensor(&mut conv, |c| &mut c.weight, &gw, loss);
    e = e.max(check_tensor(&mut conv, |c| &mut c.bias, &gb, loss));
    let mut xs = x.clone();
    e = e.max(check_tensor(&mut xs, |t| t, &dx.data, |t| linear_loss(&conv.clone().forward(t).unwrap().0, &r)));
    out.push(("conv", e));

    let mut bn = BatchNorm1d::new(4);
    bn.gamma.data = vec![0.5, 1.5, -0.7, 1.0];
    bn.beta.data = vec![0.1, -0.2, 0.3, 0.0];
    let x = probe_tensor(&[3, 4, 8], 4);
    let r = probe_tensor(&[3, 4, 8], 5);
    let (_, cache) = bn.forward(&x, true).unwrap();
    let dx = bn.backward(&cache, &r).unwrap();
    let loss = |b: &mut BatchNorm1d| linear_loss(&b.forward(&x, true).unwrap().0, &r);
    let (gg, gb) = (bn.gamma.grad.clone().unwrap(), bn.beta.grad.clone().unwrap());
    let mut e = check_tensor(&mut bn, |b| &mut b.gamma, &gg, loss);
    e = e.max(check_tensor(&mut bn, |b| &mut b.beta, &gb, loss));
    let mut xs = x.clone();
    e = e.max(check_tensor(&mut xs, |t| t, &dx.data, |t| linear_loss(&bn.clone().forward(t, true).unwrap().0, &r)));
    out.push(("batchnorm", e));

    let x = probe_tensor(&[2, 4, 8], 9);
    let r = probe_tensor(&[2, 4, 8], 10);
    let (_, arg) = maxpool1d(&x, 7).unwrap();
    let dx = maxpool1d_backward(&r, &arg).unwrap();
    let mut xs = x.clone();
    out.push(("maxpool", check_tensor(&mut xs, |t| t, &dx.data, |t| linear_loss(&maxpool1d(t, 7).unwrap().0, &r))));

    let mut ca = ChannelAttention::new(4, 2, &mut rng(11)).unwrap();
    let x = probe_tensor(&[2, 4, 8], 12);
    let r = probe_tensor(&[2, 4, 8], 13);
    let (_, cache) = ca.forward(&x).unwrap();
    let dx = ca.backward(&cache, &r).unwrap();
    let loss = |c: &mut ChannelAttention| linear_loss(&c.forward(&x).unwrap().0, &r);
    let (g0, g1) = (ca.w0.grad.clone().unwrap(), ca.w1.grad.clone().unwrap());
    let mut e = check_tensor(&mut ca, |c| &mut c.w0, &g0, loss);
    e = e.max(check_tensor(&mut ca, |c| &mut c.w1, &g1, loss));
    let mut xs = x.clone();
    e = e.max(check_tensor(&mut xs, |t| t, &dx.data, |t| linear_loss(&ca.forward(t).unwrap().0, &r)));
    out.push(("channel attention", e));

    let mut sa = SpatialAttention::new(7, &mut rng(14)).unwrap();
    let x = probe_tensor(&[2, 4, 8], 15);
    let r = probe_tensor(&[2, 4, 8], 16);
    let (_, cache) = sa.forward(&x).unwrap();
    let dx = sa.backward(&cache, &r).unwrap();
    let loss = |s: &mut SpatialAttention| linear_loss(&s.forward(&x).unwrap().0, &r);
    let (gw, gb) = (sa.conv.weight.grad.clone().unwrap(), sa.conv.bias.grad.clone().unwrap());
    let mut e = check_tensor(&mut sa, |s| &mut s.conv.weight, &gw, loss);
    e = e.max(check_tensor(&mut sa, |s| &mut s.conv.bias, &gb, loss));
    let mut xs = x.clone();
    e = e.max(check_tensor(&mut xs, |t| t, &dx.data, |t| linear_loss(&sa.forward(t).unwrap().0, &r)));
    out.push(("spatial attention", e));

    let mut d = Dense::new(32, 5, &mut rng(17));
    let x = probe_tensor(&[3, 32], 18);
    let r = probe_tensor(&[3, 5], 19);
    let dx = d.backward(&x, &r).unwrap();
    let loss = |d: &mut Dense| linear_loss(&d.forward(&x).unwrap(), &r);
    let (gw, gb) = (d.weight.grad.clone().unwrap(), d.bias.grad.clone().unwrap());
    let mut e = check_tensor(&mut d, |d| &mut d.weight, &gw, loss);
    e = e.max(check_tensor(&mut d, |d| &mut d.bias, &gb, loss));
    let mut xs = x.clone();
    e = e.max(check_tensor(&mut xs, |t| t, &dx.data, |t| linear_loss(&d.forward(t).unwrap(), &r)));
    out.push(("dense", e));

    let logits = probe_tensor(&[4, 3], 20).map(|v| 3.0 * v);
    let targets = [0, 2, 1, 2];
    let (_, grad) = softmax_cross_entropy(&logits, &targets).unwrap();
    let mut l = logits.clone();
    out.push((
        "softmax-CE",
        check_tensor(&mut l, |t| t, &grad.data, |t| softmax_cross_entropy(t, &targets).unwrap().0),
    ));

    // whole tiny model, every parameter and the input
    let mut model = AttentionCnn::new(tiny_config(), 2).unwrap();
    let x = probe_tensor(&[3, 1, 8], 102).map(|v| 2.0 * v);
    let targets = [0, 1, 2];
    let loss_of = |m: &mut AttentionCnn, x: &Tensor| softmax_cross_entropy(&m.forward(x, true).unwrap(), &targets).unwrap().0;
    model.zero_grad();
    let logits = model.forward(&x, true).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, &targets).unwrap();
    let dx = model.backward(&dlogits).unwrap();
    let grads: Vec<Vec<f64>> = model.parameters_mut().into_iter().map(|(_, t)| t.grad.clone().unwrap()).collect();
    let mut e: f64 = 0.0;
    let mut dead = false;
    for (p, g) in grads.iter().enumerate() {
        dead |= g.iter().all(|&v| v == 0.0);
        e = e.max(check_tensor(&mut model, |m| m.parameters_mut().swap_remove(p).1, g, |m| loss_of(m, &x)));
    }
    let mut xs = x.clone();
    e = e.max(check_tensor(&mut xs, |t| t, &dx.data, |t| loss_of(&mut model.clone(), t)));
    out.push(("model (C=4, L=8, J=3)", if dead { f64::INFINITY } else { e }));
    out
}

fn gradients() -> Check {
    let errs = layer_errors();
    let report = errs
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(errs.iter().all(|(_, e)| *e < 1e-4), format!("max rel err over 1e-4: {report}"))?;
    Ok(report)
}

// 4 ------------------------------------------------------------------------

fn spectral_peak_hz(samples: &[f64], rate: f64) -> f64 {
    let n = samples.len();
    let hann: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| s * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()))
        .collect();
    let spec = power_spectrum(&hann, rate);
    let k = (1..spec.power.len()).max_by(|&a, &b| spec.power[a].total_cmp(&spec.power[b])).unwrap();
    spec.frequency(k)
}

fn augmentation() -> Check {
    let n = 100_000;
    let clip = AudioClip::new((0..n).map(|t| 0.6 * (2.0 * PI * 220.0 * t as f64 / 16_000.0).sin()).collect(), 16_000);
    let peak = clip.peak();
    let noisy = add_noise(&clip, 0.035, &mut rng(2024));
    let diff: Vec<f64> = noisy.samples.iter().zip(&clip.samples).map(|(a, b)| a - b).collect();
    let mean = diff.iter().sum::<f64>() / n as f64;
    let std = (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let ratio = std / peak;
    ensure((0.033..=0.037).contains(&ratio), format!("noise std {ratio:.5} A_max"))?;

    let rate = 16_000.0;
    let bin = rate / 8192.0;
    let tone = AudioClip::new((0..32_000).map(|t| 0.5 * (2.0 * PI * 440.0 * t as f64 / rate).sin()).collect(), 16_000);
    let mut shifts = Vec::new();
    for (s, want) in [(12, 880.0), (-12, 220.0)] {
        let out = pitch_shift(&tone, s).map_err(|e| e.to_string())?;
        let mid = &out.samples[12_000..12_000 + 8192];
        let f = spectral_peak_hz(mid, rate);
        ensure((f - want).abs() <= bin + 1e-9, format!("{s:+} semitones: peak {f:.1} Hz, want {want} Hz"))?;
        shifts.push(format!("{s:+} -> {f:.1} Hz"));
    }
    Ok(format!("noise std {ratio:.5} A_max; {} (bin {bin:.2} Hz)", shifts.join(", ")))
}

// 5 and 7 ----------------------------------------------------------------

/// 32 three-second clips: class 0 a low voiced buzz, class 1 a higher one,
/// each with a random pitch, a few harmonics and background noise.
fn smoke_set() -> Vec<Sample> {
    let cfg = DspConfig::default();
    let extractor = MfccExtractor::new(&cfg, 16_000).unwrap();
    let mut r = rng(5);
    (0..32)
        .map(|i| {
            let label = i % 2;
            let f0 = if label == 0 { r.gen_range(110.0..160.0) } else { r.gen_range(220.0..320.0) };
            let samples: Vec<f64> = (0..48_000)
                .map(|t| {
                    let tt = t as f64 / 16_000.0;
                    let voiced: f64 = (1..=4).map(|h| (2.0 * PI * f0 * h as f64 * tt).sin() / h as f64).sum();
                    0.2 * voiced + 0.01 * r.gen_range(-1.0..1.0)
                })
                .collect();
            let f = extractor.extract(&AudioClip::new(samples, 16_000)).unwrap();
            Sample {
                features: f.pooled.unwrap(),
                label,
            }
        })
        .collect()
}

fn smoke_run(set: &[Sample]) -> Result<(Vec<f64>, Option<usize>, f64), String> {
    let model = AttentionCnn::new(ModelConfig::pooled(20, 2), 11).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 200,
        batch_size: 8,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(model, set, &[], &cfg, |_| {}).map_err(|e| e.to_string())?;
    let first_perfect = out.log.iter().find(|e| e.train_acc == 1.0).map(|e| e.epoch);
    let labels = vec!["low".to_string(), "high".to_string()];
    let acc = evaluate(&out.best, set, &labels, 32).map_err(|e| e.to_string())?.accuracy;
    Ok((out.log.iter().map(|e| e.train_loss).collect(), first_perfect, acc))
}

fn overfit(set: &[Sample]) -> Check {
    let (losses, first, acc) = smoke_run(set)?;
    let first = first.ok_or(format!(
        "never reached 100% train accuracy; final loss {:.4}",
        losses.last().unwrap()
    ))?;
    ensure(acc == 1.0, format!("best checkpoint scores {acc} on the training clips"))?;
    Ok(format!(
        "100% train accuracy first at epoch {first}; best checkpoint 32/32; final loss {:.2e}",
        losses.last().unwrap()
    ))
}

fn determinism(set: &[Sample]) -> Check {
    let (a, _, _) = smoke_run(set)?;
    let (b, _, _) = smoke_run(set)?;
    let same = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    ensure(same, "epoch losses differ between runs")?;
    Ok(format!("{} epoch losses bit-identical across two runs", a.len()))
}

// 6 ------------------------------------------------------------------------

fn tess_end_to_end(root: &Path) -> Check {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let d = dir.path();
    let ser = |args: &[&str]| -> Result<String, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_ser"))
            .current_dir(d)
            .env("RUST_LOG", "warn")
            .args(["--seed", "0", "--cache-dir"])
            .arg(d.join("cache"))
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(String::from_utf8_lossy(&out.stdout).into_owned())
        } else {
            Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };
    let root = root.to_str().ok_or("non-UTF-8 corpus path")?;
    ser(&["scan", "--dataset", "TESS", "--root", root, "--manifest", "tess.csv"])?;
    let rows = std::fs::read_to_string(d.join("tess.csv")).map_err(|e| e.to_string())?.lines().count() - 1;
    ensure(rows == 2800, format!("corpus has {rows} clips, expected 2800"))?;
    let accuracy = |ckpt: &str, extra: &[&str]| -> Result<f64, String> {
        let mut args = vec!["train", "--manifest", "tess.csv", "--checkpoint", ckpt];
        args.extend(extra);
        ser(&args)?;
        let split = format!("{ckpt}.split.csv");
        let out_dir = format!("{ckpt}.eval");
        ser(&["eval", "--checkpoint", ckpt, "--manifest", &split, "--out-dir", &out_dir])?;
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d.join(&out_dir).join("summary.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        summary["accuracy"].as_f64().ok_or("summary lacks accuracy".into())
    };
    let start = Instant::now();
    let with = accuracy("aug.serm", &["--augment-before-split"])?;
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let without = accuracy("plain.serm", &["--no-augment"])?;
    ensure(with >= 0.9, format!("test accuracy {:.2}% with augmentation", 100.0 * with))?;
    ensure(minutes < 30.0, format!("augmented run took {minutes:.1} min"))?;
    ensure(without < with, format!("no-augment {:.2}% is not below {:.2}%", 100.0 * without, 100.0 * with))?;
    Ok(format!(
        "test accuracy {:.2}% (augmented, {minutes:.1} min) vs {:.2}% without augmentation",
        100.0 * with,
        100.0 * without
    ))
}

fn main() {
    let mut ok = true;
    ok &= run(1, "DSP oracle suite", Duration::from_secs(10), || verdict(dsp_oracles()));
    ok &= run(2, "demo spectra peaks and ordering", Duration::from_secs(5), || verdict(demo_spectra()));
    ok &= run(3, "gradient verification", Duration::from_secs(60), || verdict(gradients()));
    ok &= run(4, "augmentation statistics", Duration::from_secs(10), || verdict(augmentation()));
    let set = smoke_set();
    ok &= run(5, "overfit smoke test", Duration::from_secs(120), || verdict(overfit(&set)));
    ok &= run(6, "TESS end to end", Duration::from_secs(3 * 3600), || match std::env::var_os("SER_TESS_ROOT") {
        Some(root) => verdict(tess_end_to_end(Path::new(&root))),
        None => Verdict::Skip("SER_TESS_ROOT not set; needs the 2800-clip TESS corpus".into()),
    });
    ok &= run(7, "determinism", Duration::from_secs(240), || verdict(determinism(&set)));
    if !ok {
        std::process::exit(1);
    }
}
