//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use declip::assess::{
    coop_tune, evaluate_dataset, linear_probe, plcc, score_from_cosines, srcc, zero_shot_score, AntonymPromptPair,
    AttributeTable, CoopConfig, EvalOptions, MosItem, ProbeConfig, PromptSource,
};
use declip::condgen::{condition_bytes, condition_from_bytes, ConditionBundle, ConditionMode, Provenance};
use declip::data::{
    filter_records, load_dataset, make_synthetic_benchmark, save_dataset, I2TRecord, ImageType,
    PerceptualVocabulary, RawCaptionRecord, Source,
};
use declip::disentangle::{
    contrastive_loss, load_checkpoint, save_checkpoint, train, DeclipModel, Projection, ResMlpGrads, ResMlpParams,
    TrainConfig,
};
use declip::encoders::{EncoderBackend, ImageInput, ToyEncoder};
use declip::rng::SplitMix64;
use declip::EmbeddingVector;
use sha2::{Digest, Sha256};

// Pinned tolerances.
const GRAD_REL_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-4;
const LOSS_ORACLE_TOL: f64 = 1e-10;
const CLOSED_FORM_TOL: f64 = 1e-9;
const SCORE_TOL: f64 = 1e-9;
const CORR_TOL: f64 = 1e-12;
const LOSS_DROP: f64 = 0.30;
const PROBE_GAP: f64 = 0.15;
const SRCC_GAIN: f64 = 0.30;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn unit(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn emb(v: Vec<f64>) -> EmbeddingVector {
    EmbeddingVector::normalized(v).unwrap()
}

fn toy(dim: usize, seed: u64) -> Arc<EncoderBackend> {
    Arc::new(EncoderBackend::toy(seed, dim))
}

/// Fills `W2` (and jitters `W1`, `b1`) with f32-representable values so the
/// residual branch is active.
fn randomize(p: &mut ResMlpParams, rng: &mut SplitMix64, scale: f64) {
    for t in p.tensors_mut() {
        for x in t.iter_mut() {
            *x = (rng.uniform(-scale, scale) as f32) as f64;
        }
    }
}

fn refs(v: &[EmbeddingVector]) -> Vec<&EmbeddingVector> {
    v.iter().collect()
}

fn param_mut(m: &mut DeclipModel, which: usize, tensor: usize, k: usize) -> &mut f64 {
    let p = if which == 0 { &mut m.proj_p } else { &mut m.proj_s };
    &mut p.tensors_mut()[tensor][k]
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖)`.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn c1_identity() -> Check {
    let t = Instant::now();
    let model = DeclipModel::new(toy(64, 1), 1024, 1);
    let mut rng = SplitMix64::new(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = emb(unit(&mut rng, 64));
        for which in [Projection::Perceptual, Projection::Semantic] {
            let y = model.project_embedding(which, &x).unwrap();
            worst = worst.max(max_abs(x.values(), y.values()));
        }
    }
    let dt = t.elapsed();
    ensure!(worst == 0.0, "max abs deviation {worst:e}");
    ensure!(dt < Duration::from_secs(1), "took {dt:?}");
    Ok(format!("max abs deviation 0 over 1000 vectors in {:.3}s", dt.as_secs_f64()))
}

fn c2_gradients() -> Check {
    let t = Instant::now();
    let (dim, batch, hidden) = (16, 4, 8);
    let mut rng = SplitMix64::new(22);
    let mut worst = [0.0f64; 3];
    for inst in 0..100u64 {
        let mut model = DeclipModel::new(toy(dim, inst), hidden, inst);
        randomize(&mut model.proj_p, &mut rng, 0.5);
        randomize(&mut model.proj_s, &mut rng, 0.5);
        let tau = rng.uniform(0.2, 1.0);
        model.set_tau(tau).unwrap();
        let mk = |rng: &mut SplitMix64| (0..batch).map(|_| emb(unit(rng, dim))).collect::<Vec<_>>();
        let (imgs, tp, ts) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let (ri, rp, rs) = (refs(&imgs), refs(&tp), refs(&ts));
        let loss = |m: &DeclipModel| m.total_loss_embeddings(&ri, &rp, &rs).unwrap().total;

        // Model loss with respect to every projector parameter.
        let analytic = model.total_loss_embeddings(&ri, &rp, &rs).unwrap().grads;
        let flat = |g: &ResMlpGrads| [g.w1.clone(), g.b1.clone(), g.w2.clone()].concat();
        let a: Vec<f64> = [flat(&analytic.p), flat(&analytic.s)].concat();
        let mut n = Vec::with_capacity(a.len());
        for which in 0..2 {
            for tensor in 0..3 {
                let len = model.proj_p.tensors()[tensor].len();
                for k in 0..len {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    *param_mut(&mut plus, which, tensor, k) += FD_STEP;
                    *param_mut(&mut minus, which, tensor, k) -= FD_STEP;
                    n.push((loss(&plus) - loss(&minus)) / (2.0 * FD_STEP));
                }
            }
        }
        worst[0] = worst[0].max(rel_err(&a, &n));

        // Contrastive loss with respect to its inputs.
        let img_v: Vec<Vec<f64>> = imgs.iter().map(|e| e.values().to_vec()).collect();
        let txt_v: Vec<Vec<f64>> = tp.iter().map(|e| e.values().to_vec()).collect();
        let out = contrastive_loss(&img_v, &txt_v, tau).unwrap();
        let mut a = Vec::new();
        let mut n = Vec::new();
        for side in 0..2 {
            for i in 0..batch {
                for k in 0..dim {
                    let eval = |d: f64| {
                        let (mut iv, mut tv) = (img_v.clone(), txt_v.clone());
                        if side == 0 { iv[i][k] += d } else { tv[i][k] += d }
                        contrastive_loss(&iv, &tv, tau).unwrap().loss
                    };
                    n.push((eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP));
                    a.push(if side == 0 { out.grad_img[i][k] } else { out.grad_txt[i][k] });
                }
            }
        }
        worst[1] = worst[1].max(rel_err(&a, &n));

        // Projector forward with respect to its input, through c · forward(x).
        let p = &model.proj_p;
        let x = unit(&mut rng, dim);
        let c = unit(&mut rng, dim);
        let trace = p.forward_trace(&x, true).unwrap();
        let mut sink = ResMlpGrads::zeros(dim, hidden);
        let a = p.backward(&trace, &c, &mut sink);
        let n: Vec<f64> = (0..dim)
            .map(|k| {
                let f = |d: f64| {
                    let mut xx = x.clone();
                    xx[k] += d;
                    p.forward(&xx, true).unwrap().iter().zip(&c).map(|(o, w)| o * w).sum::<f64>()
                };
                (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP)
            })
            .collect();
        worst[2] = worst[2].max(rel_err(&a, &n));
    }
    let dt = t.elapsed();
    ensure!(worst.iter().all(|w| *w <= GRAD_REL_TOL), "relative errors (params, loss inputs, forward input) {worst:?}");
    ensure!(dt < Duration::from_secs(30), "took {dt:?}");
    Ok(format!(
        "max rel err params {:.1e}, loss inputs {:.1e}, forward input {:.1e} over 100 instances in {:.2}s",
        worst[0],
        worst[1],
        worst[2],
        dt.as_secs_f64()
    ))
}

// Straight-line reference for the projector and the decoupled loss.
fn oracle_project(p: &ResMlpParams, x: &[f64]) -> Vec<f64> {
    let (d, h) = (p.dim, p.hidden);
    let mut act = vec![0.0; h];
    for j in 0..h {
        let mut z = p.b1[j];
        for i in 0..d {
            z += p.w1[j * d + i] * x[i];
        }
        act[j] = z / (1.0 + (-z).exp());
    }
    let mut y = x.to_vec();
    for i in 0..d {
        for j in 0..h {
            y[i] += p.w2[i * h + j] * act[j];
        }
    }
    let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    y.iter().map(|v| v / n).collect()
}

fn oracle_infonce(img: &[Vec<f64>], txt: &[Vec<f64>], tau: f64) -> f64 {
    let b = img.len();
    let mut total = 0.0;
    for i in 0..b {
        let s: Vec<f64> = txt.iter().map(|t| img[i].iter().zip(t).map(|(a, c)| a * c).sum::<f64>() / tau).collect();
        let lse = s.iter().map(|v| v.exp()).sum::<f64>().ln();
        total += lse - s[i];
    }
    total / b as f64
}

fn c3_loss_oracle() -> Check {
    let t = Instant::now();
    let mut rng = SplitMix64::new(33);
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let dim = 12;
        let mut model = DeclipModel::new(toy(dim, k), 16, k);
        randomize(&mut model.proj_p, &mut rng, 0.4);
        randomize(&mut model.proj_s, &mut rng, 0.4);
        let mk = |rng: &mut SplitMix64| (0..8).map(|_| unit(rng, dim)).collect::<Vec<_>>();
        let (imgs, tp, ts) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let e = |v: &[Vec<f64>]| v.iter().map(|x| emb(x.clone())).collect::<Vec<_>>();
        let (ei, ep, es) = (e(&imgs), e(&tp), e(&ts));
        let got = model.total_loss_embeddings(&refs(&ei), &refs(&ep), &refs(&es)).unwrap().total;
        let fp: Vec<Vec<f64>> = ei.iter().map(|x| oracle_project(&model.proj_p, x.values())).collect();
        let fs: Vec<Vec<f64>> = ei.iter().map(|x| oracle_project(&model.proj_s, x.values())).collect();
        let want = oracle_infonce(&fp, &tp, model.tau()) + oracle_infonce(&fs, &ts, model.tau());
        worst = worst.max((got - want).abs());
    }
    let dt = t.elapsed();
    ensure!(worst <= LOSS_ORACLE_TOL, "max abs diff {worst:e}");
    ensure!(dt < Duration::from_secs(5), "took {dt:?}");
    Ok(format!("max abs diff {worst:.1e} over 20 batches of 8"))
}

fn c4_closed_form() -> Check {
    let e = |i: usize, d: usize| (0..d).map(|k| if k == i { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let basis = vec![e(0, 4), e(1, 4)];
    let ortho = contrastive_loss(&basis, &basis, 1.0).unwrap().loss;
    let want = (1.0 + (-1.0f64).exp()).ln();
    ensure!((ortho - want).abs() <= CLOSED_FORM_TOL, "orthogonal pair: {ortho} vs {want}");
    let mut rng = SplitMix64::new(44);
    let v = unit(&mut rng, 8);
    for b in [2usize, 5, 32] {
        let same = vec![v.clone(); b];
        let got = contrastive_loss(&same, &same, 0.07).unwrap().loss;
        ensure!((got - (b as f64).ln()).abs() <= CLOSED_FORM_TOL, "identical batch of {b}: {got}");
    }
    Ok(format!("orthogonal {ortho:.12}, identical batches equal log B"))
}

fn c5_disentanglement() -> Check {
    let t = Instant::now();
    let bench = make_synthetic_benchmark(7, 512, 4, 4).map_err(|e| e.to_string())?;
    let enc = Arc::new(EncoderBackend::Toy(ToyEncoder::new(7, 64).with_images(bench.image_map())));
    let model = DeclipModel::new(enc, 1024, 7);
    let config = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let out = train(&model, &bench.records, &config).map_err(|e| e.to_string())?;
    let last = out.log.last().unwrap().mean_loss;
    let drop = 1.0 - last / out.initial_loss;

    let feats = |m: &DeclipModel, which: Projection| -> Vec<Vec<f64>> {
        bench
            .records
            .iter()
            .map(|r| m.project(which, &ImageInput::Key(r.image_ref.clone())).unwrap().into_values())
            .collect()
    };
    let perc: Vec<usize> = bench.factors.iter().map(|f| f.perc).collect();
    let sem: Vec<usize> = bench.factors.iter().map(|f| f.sem).collect();
    let probe = ProbeConfig::default();
    let acc = |f: &[Vec<f64>], y: &[usize]| linear_probe(f, y, &probe).unwrap().test_accuracy;
    let (fp, fs) = (feats(&out.model, Projection::Perceptual), feats(&out.model, Projection::Semantic));
    let (pp, ps, ss, sp) = (acc(&fp, &perc), acc(&fs, &perc), acc(&fs, &sem), acc(&fp, &sem));

    let mos = bench.sharpness_mos();
    let items: Vec<MosItem> = bench.records.iter().zip(&mos).map(|(r, m)| MosItem::new(r.image_ref.clone(), *m)).collect();
    let pair = AttributeTable::default().get("sharpness").unwrap().clone();
    let opts = EvalOptions {
        prompts: PromptSource::Antonym(pair),
        ..EvalOptions::default()
    };
    let s0 = evaluate_dataset(&model, &items, &opts).unwrap().srcc.unwrap_or(f64::NAN);
    let s1 = evaluate_dataset(&out.model, &items, &opts).unwrap().srcc.unwrap_or(f64::NAN);
    let dt = t.elapsed();

    let detail = format!(
        "loss {:.3} -> {last:.3} (drop {:.1}%); probe perc p/s {pp:.3}/{ps:.3}, sem s/p {ss:.3}/{sp:.3}; srcc {s0:.3} -> {s1:.3}; {:.0}s",
        out.initial_loss,
        100.0 * drop,
        dt.as_secs_f64()
    );
    ensure!(drop >= LOSS_DROP, "(a) loss drop below 30%: {detail}");
    ensure!(pp - ps >= PROBE_GAP && ss - sp >= PROBE_GAP, "(b) probe gap below 15 points: {detail}");
    ensure!(s1 - s0 >= SRCC_GAIN, "(c) srcc gain below 0.3: {detail}");
    ensure!(dt < Duration::from_secs(300), "runtime over 5 min: {detail}");
    Ok(detail)
}

fn c6_score() -> Check {
    let mut rng = SplitMix64::new(66);
    for _ in 0..10_000 {
        let s = score_from_cosines(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        ensure!(s > 0.0 && s < 1.0, "score {s} outside (0,1)");
    }
    let sig2 = 1.0 / (1.0 + (-2.0f64).exp());
    ensure!((score_from_cosines(1.0, -1.0) - sig2).abs() <= SCORE_TOL, "cosines (+1,-1)");
    let sweep: Vec<f64> = (0..100).map(|i| score_from_cosines(-1.0 + 2.0 * i as f64 / 99.0, 0.3)).collect();
    ensure!(sweep.windows(2).all(|w| w[1] > w[0]), "not strictly monotone");
    let model = DeclipModel::new(toy(32, 6), 64, 6);
    let img = image::RgbImage::from_fn(16, 16, |x, y| image::Rgb([(x * 13) as u8, (y * 7) as u8, 90]));
    let s = zero_shot_score(&model, &ImageInput::Pixels(img), &AntonymPromptPair::degenerate("a sharp photo")).unwrap();
    ensure!(s == 0.5, "identical prompts gave {s}");
    Ok("range, identical prompts, sigma(2), monotone sweep".into())
}

fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

fn c7_correlation() -> Check {
    let mut rng = SplitMix64::new(77);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = 2 + rng.below(49) as usize;
        let draw = |rng: &mut SplitMix64| -> f64 {
            if case % 2 == 0 {
                rng.below(6) as f64 * 0.5
            } else {
                rng.uniform(-3.0, 3.0)
            }
        };
        let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let pairs = [
            (srcc(&a, &b).unwrap(), oracle_pearson(&oracle_ranks(&a), &oracle_ranks(&b))),
            (plcc(&a, &b).unwrap(), oracle_pearson(&a, &b)),
        ];
        for (got, want) in pairs {
            match (got, want) {
                (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                (None, None) => {}
                _ => return Err(format!("definedness differs on case {case}: {got:?} vs {want:?}")),
            }
        }
    }
    ensure!(worst <= CORR_TOL, "max abs diff {worst:e}");
    Ok(format!("max abs diff {worst:.1e} over 200 pairs"))
}

fn c8_filter() -> Check {
    let vocab = PerceptualVocabulary::new(["sharp", "blurry", "low light", "vivid color", "noise"]).unwrap();
    let terms = ["sharp", "blurry", "low light", "vivid color", "noise"];
    let filler = ["the", "dog", "sits", "on", "grass", "near", "a", "tree", "light", "color"];
    let mut rng = SplitMix64::new(88);
    let mut records = Vec::new();
    let mut annotated = Vec::new();
    for i in 0..100 {
        let hits = i % 13;
        let mut words: Vec<&str> = Vec::new();
        for _ in 0..3 {
            words.push(filler[rng.below(filler.len() as u64) as usize]);
        }
        for h in 0..hits {
            words.push(terms[(h + i) % terms.len()]);
            words.push(filler[rng.below(filler.len() as u64) as usize]);
        }
        annotated.push(hits);
        records.push(RawCaptionRecord {
            image_ref: format!("img{i:03}.png"),
            human_description: words.join(" "),
            source: Source::Other,
            image_type: ImageType::Natural,
        });
    }
    let kept = filter_records(&records, &vocab, 7);
    let want: Vec<&RawCaptionRecord> = records.iter().zip(&annotated).filter(|(_, h)| **h >= 7).map(|(r, _)| r).collect();
    ensure!(kept.iter().collect::<Vec<_>>() == want, "kept {} records, expected {}", kept.len(), want.len());
    let again = filter_records(&kept, &vocab, 7);
    ensure!(again == kept, "filter is not idempotent");
    Ok(format!("kept {} of 100, idempotent", kept.len()))
}

fn encoder_probe(bench: &declip::data::SyntheticBenchmark) -> (Vec<ImageInput>, Vec<&str>) {
    let images = bench.records.iter().take(16).map(|r| ImageInput::Key(r.image_ref.clone())).collect();
    let texts = bench.records.iter().take(16).flat_map(|r| [r.t_p.as_str(), r.t_s.as_str()]).collect();
    (images, texts)
}

fn c9_frozen() -> Check {
    let bench = make_synthetic_benchmark(9, 64, 4, 4).map_err(|e| e.to_string())?;
    let enc = Arc::new(EncoderBackend::Toy(ToyEncoder::new(9, 32).with_images(bench.image_map())));
    let (imgs, texts) = encoder_probe(&bench);
    let before = enc.fingerprint(&imgs, &texts).unwrap();
    let model = DeclipModel::new(enc.clone(), 64, 9);
    let model_sum = model.param_checksum();
    let cfg = TrainConfig { epochs: 3, seed: 9, ..TrainConfig::default() };
    let out = train(&model, &bench.records, &cfg).unwrap();
    ensure!(enc.fingerprint(&imgs, &texts).unwrap() == before, "encoder changed during training");
    ensure!(out.model.encoder().fingerprint(&imgs, &texts).unwrap() == before, "trained model's encoder differs");
    ensure!(model.param_checksum() == model_sum, "input model mutated by training");
    ensure!(out.model.param_checksum() != model_sum, "training did not move the projectors");

    let trained_sum = out.model.param_checksum();
    let mos = bench.sharpness_mos();
    let items: Vec<MosItem> = bench.records.iter().zip(&mos).map(|(r, m)| MosItem::new(r.image_ref.clone(), *m)).collect();
    let coop_cfg = CoopConfig { epochs: 5, ..CoopConfig::default() };
    let tuned = coop_tune(&out.model, &items, &AntonymPromptPair::quality(), &coop_cfg).unwrap();
    ensure!(out.model.param_checksum() == trained_sum, "prompt tuning changed model parameters");
    ensure!(enc.fingerprint(&imgs, &texts).unwrap() == before, "prompt tuning changed the encoder");
    ensure!(tuned.prompt.context.iter().flatten().any(|x| *x != 0.0), "prompt context did not move");
    Ok("encoder fingerprint and parameter checksums unchanged".into())
}

fn random_text(rng: &mut SplitMix64) -> String {
    const POOL: [&str; 12] = ["sharp", "dog", "é", "\"quoted\"", "tab\there", "newline\n", "日本", "🙂", "a", " ", "\\", "x"];
    let n = 1 + rng.below(8) as usize;
    let s: String = (0..n).map(|_| POOL[rng.below(POOL.len() as u64) as usize]).collect::<Vec<_>>().join(" ");
    format!("w {s}")
}

fn sha(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn rejects_damage(path: &Path, load: impl Fn(&Path) -> bool) -> Result<(), String> {
    let good = std::fs::read(path).unwrap();
    let damaged = path.with_extension("damaged");
    let mut rng = SplitMix64::new(good.len() as u64);
    for cut in [0, 5, good.len() / 3, good.len() / 2, good.len() - 1] {
        std::fs::write(&damaged, &good[..cut]).unwrap();
        ensure!(!load(&damaged), "accepted a file truncated to {cut} bytes");
    }
    for _ in 0..10 {
        let mut bad = good.clone();
        let at = good.len() - 1 - rng.below(good.len() as u64 / 4) as usize;
        bad[at] ^= 0x5a;
        std::fs::write(&damaged, &bad).unwrap();
        ensure!(!load(&damaged), "accepted a corrupt byte at {at}");
    }
    Ok(())
}

fn c10_serialization() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SplitMix64::new(1010);
    let sources = [Source::AesExpert, Source::QInstruct, Source::ShareGPT4v, Source::AvaComments, Source::Synthetic, Source::Other];
    let types = [ImageType::Natural, ImageType::Art, ImageType::Aigc];
    for round in 0..20 {
        let records: Vec<I2TRecord> = (0..1 + rng.below(30))
            .map(|i| I2TRecord {
                image_ref: format!("dir/{round}_{i}.png"),
                t_p: random_text(&mut rng),
                t_s: random_text(&mut rng),
                source: sources[rng.below(6) as usize],
                image_type: types[rng.below(3) as usize],
            })
            .collect();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        save_dataset(&records, &a).unwrap();
        let back = load_dataset(&a).unwrap();
        ensure!(back == records, "dataset round trip differs");
        save_dataset(&back, &b).unwrap();
        ensure!(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap(), "dataset bytes differ");
    }
    let ds = dir.path().join("a.jsonl");
    let mut text = std::fs::read_to_string(&ds).unwrap();
    text.truncate(text.len() / 2);
    std::fs::write(&ds, text).unwrap();
    ensure!(load_dataset(&ds).is_err(), "accepted a truncated dataset");

    let enc = toy(24, 3);
    for round in 0..10u64 {
        let mut model = DeclipModel::new(enc.clone(), 20, round);
        randomize(&mut model.proj_p, &mut rng, 1.0);
        randomize(&mut model.proj_s, &mut rng, 1.0);
        let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        save_checkpoint(&model, &a).unwrap();
        let back = load_checkpoint(&a, enc.clone()).unwrap();
        ensure!(back.param_checksum() == model.param_checksum(), "checkpoint parameters differ");
        save_checkpoint(&back, &b).unwrap();
        ensure!(sha(&std::fs::read(&a).unwrap()) == sha(&std::fs::read(&b).unwrap()), "checkpoint bytes differ");
    }
    rejects_damage(&dir.path().join("a.ckpt"), |p| load_checkpoint(p, enc.clone()).is_ok())?;

    for round in 0..100 {
        let dim = 2 + rng.below(40) as usize;
        let mode = ConditionMode::ALL[round % 2];
        let bundle = ConditionBundle {
            mode,
            image_embedding: emb(unit(&mut rng, dim)).to_f32_precision(),
            text_embedding: emb(unit(&mut rng, dim)).to_f32_precision(),
            provenance: Provenance {
                image_ref: format!("img_{round}.png"),
                text: random_text(&mut rng),
                checkpoint_id: format!("{:016x}", rng.next_u64()),
                image_projection: mode.image_projection(),
                text_role: mode.text_role(),
            },
        };
        let bytes = condition_bytes(&bundle).unwrap();
        let back = condition_from_bytes(&bytes).unwrap();
        ensure!(condition_bytes(&back).unwrap() == bytes, "condition bytes differ");
        ensure!(back.image_embedding.values() == bundle.image_embedding.values(), "condition image embedding differs");
        ensure!(back.text_embedding.values() == bundle.text_embedding.values(), "condition text embedding differs");
        if round == 0 {
            let p = dir.path().join("c.cond");
            std::fs::write(&p, &bytes).unwrap();
            rejects_damage(&p, |p| condition_from_bytes(&std::fs::read(p).unwrap()).is_ok())?;
        }
    }
    Ok("dataset, checkpoint and condition files round-trip bitwise; damage rejected".into())
}

fn pipeline(dir: &Path, tag: &str) -> (String, String) {
    let bench = make_synthetic_benchmark(11, 96, 4, 4).unwrap();
    let root = dir.join(tag);
    bench.write_to_dir(&root).unwrap();
    let enc = Arc::new(EncoderBackend::toy_with_root(11, 32, root.join("images")));
    let records = load_dataset(root.join("dataset.jsonl")).unwrap();
    let model = DeclipModel::new(enc.clone(), 64, 11);
    let cfg = TrainConfig { epochs: 4, seed: 11, ..TrainConfig::default() };
    let out = train(&model, &records, &cfg).unwrap();
    let ckpt = root.join("model.ckpt");
    save_checkpoint(&out.model, &ckpt).unwrap();
    let loaded = load_checkpoint(&ckpt, enc).unwrap();
    let items = declip::assess::load_mos_csv(root.join("mos.csv")).unwrap();
    let opts = EvalOptions {
        checkpoint_id: loaded.param_checksum(),
        seed: Some(11),
        ..EvalOptions::default()
    };
    let report = evaluate_dataset(&loaded, &items, &opts).unwrap();
    (sha(&std::fs::read(&ckpt).unwrap()), report.to_json())
}

fn c11_determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let (h1, r1) = pipeline(dir.path(), "run1");
    let (h2, r2) = pipeline(dir.path(), "run2");
    ensure!(h1 == h2, "checkpoint hashes differ: {h1} vs {h2}");
    ensure!(r1 == r2, "evaluation reports differ");
    Ok(format!("checkpoint sha256 {}…, reports identical", &h1[..16]))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("identity at init", c1_identity),
        ("gradient correctness", c2_gradients),
        ("loss oracle equivalence", c3_loss_oracle),
        ("closed-form loss values", c4_closed_form),
        ("disentanglement on synthetic benchmark", c5_disentanglement),
        ("antonym score properties", c6_score),
        ("SRCC/PLCC oracle", c7_correlation),
        ("filter conformance", c8_filter),
        ("frozen encoder and prompt-tuning contracts", c9_frozen),
        ("serialization round trips", c10_serialization),
        ("pipeline determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
