use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use serde_json::{json, Value};

use texloss::aggregation::{AggregationRule, AttentionParams, RuleName};
use texloss::analysis::{kde_auto, match_scores, pd_rank, ranked_to_csv, read_pd_csv};
use texloss::bench::{run_scaling, BenchMode};
use texloss::descriptors::DescriptorKind;
use texloss::glcm::{hard_glcm, soft_glcm, BinGrid, Offset};
use texloss::grad::{finite_diff_check, TextureLoss, TextureObjective};
use texloss::image::{rescale, Image, Interval};
use texloss::io::{load_auto, load_image, save_image, write_atomic, ImageFormat};
use texloss::metrics::{mse, psnr, ssim, SsimParams};
use texloss::mste::{extract, GlcmMode, OffsetGrid};
use texloss::optimize::{compare_losses, denoise_pixels, Competitor, OptimConfig, Optimizer};
use texloss::synth;

use crate::args::*;
use crate::CliError;

type CmdResult = Result<ExitCode, CliError>;

pub fn run(cli: Cli) -> CmdResult {
    let seed = cli.seed;
    match cli.command {
        Command::Glcm(a) => glcm(a),
        Command::Features(a) => features(a),
        Command::Loss(a) => loss(a, seed),
        Command::Gradcheck(a) => gradcheck(a, seed),
        Command::Denoise(a) => denoise(a, seed),
        Command::Metrics(a) => metrics(a),
        Command::Match(a) => matching(a),
        Command::Rank(a) => rank(a),
        Command::Bench(a) => bench(a, seed),
    }
}

fn load(path: &Path, fmt: &FormatArg) -> Result<Image, CliError> {
    match &fmt.format {
        Some(f) => {
            let format: ImageFormat = f.parse().map_err(|e: texloss::Error| CliError::Usage(e.to_string()))?;
            Ok(load_image(path, format)?)
        }
        None => Ok(load_auto(path)?),
    }
}

/// Saves by extension; PGM targets get an affine remap into `[0, maxval]`
/// when the image carries another range.
fn save(img: &Image, path: &Path) -> Result<(), CliError> {
    let format = ImageFormat::from_path(path);
    let img = match format {
        ImageFormat::RawF32 => img.clone(),
        _ => {
            let target = Interval::new(0.0, 255.0)?;
            if img.range() == target {
                img.clone()
            } else {
                rescale(img, target)?
            }
        }
    };
    Ok(save_image(&img, path, format)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => Ok(write_atomic(p, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values always serialize"));
}

/// JSON has no infinities; they are written as strings.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else if v < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

fn bins_for(range: Interval, b: &BinArgs) -> Result<BinGrid, CliError> {
    if b.bins < 2 {
        return Err(CliError::Usage("--bins must be at least 2".into()));
    }
    let spacing = range.width() / (b.bins - 1) as f64;
    Ok(BinGrid::uniform(range.lo, range.hi, b.bins, b.sigma * spacing)?)
}

fn grid_for(g: &GridArgs) -> Result<OffsetGrid, CliError> {
    Ok(OffsetGrid::new(g.distances.clone(), g.angles.clone())?)
}

fn build_rule(rule: RuleArg, cq: usize, seed: u64, params: Option<&Path>) -> Result<AggregationRule, CliError> {
    match (RuleName::from(rule), params) {
        (RuleName::Attention, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(texloss::Error::from)?;
            let params = AttentionParams::from_json(&text)?;
            if params.cq != cq {
                return Err(CliError::Usage(format!(
                    "attention parameters have cq = {}, the offset grid has {cq} cells",
                    params.cq
                )));
            }
            Ok(AggregationRule::Attention(params))
        }
        (name, _) => Ok(name.build(cq, seed)?),
    }
}

fn glcm(a: GlcmArgs) -> CmdResult {
    let img = load(&a.image, &a.format)?;
    let bins = bins_for(img.range(), &a.bins)?;
    let off = Offset::new(a.d, a.theta)?;
    let g = match a.mode {
        ModeArg::Hard => hard_glcm(&img, off, &bins)?,
        ModeArg::Soft => soft_glcm(&img, off, &bins)?,
    };
    let text = if a.json {
        serde_json::to_string_pretty(&g.to_json()).map_err(texloss::Error::from)? + "\n"
    } else {
        g.to_csv()
    };
    emit(a.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn features(a: FeaturesArgs) -> CmdResult {
    let img = load(&a.image, &a.format)?;
    let bins = bins_for(img.range(), &a.bins)?;
    let grid = grid_for(&a.grid)?;
    let repr = extract(&img, &grid, &bins, a.descriptor.into(), GlcmMode::from(a.mode))?;
    emit(a.out.as_deref(), &repr.to_csv())?;
    Ok(ExitCode::SUCCESS)
}

fn loss(a: LossArgs, seed: u64) -> CmdResult {
    let reference = load(&a.a, &a.format)?;
    let other = load(&a.b, &a.format)?;
    reference.ensure_same_shape(&other)?;
    let grid = grid_for(&a.grid)?;
    let bins = bins_for(reference.range(), &a.bins)?;
    let rule = build_rule(a.rule, grid.len(), seed, a.attention_params.as_deref())?;
    let tl = TextureLoss::new(grid, bins, a.descriptor.into(), rule);
    let target = tl.target(&reference)?;
    let value = tl.loss(&other, &target)?;
    print_json(&json!({ "l_txt": num(value) }));
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(a: GradcheckArgs, seed: u64) -> CmdResult {
    if a.size < 2 {
        return Err(CliError::Usage("--size must be at least 2".into()));
    }
    let range = Interval::symmetric_unit();
    // keep probes of ±step inside the range
    let random = |s: u64| -> Result<Image, CliError> {
        let img = synth::uniform_noise(a.size, a.size, range, s)?;
        Ok(img.with_data(img.data().iter().map(|v| 0.9 * v).collect())?)
    };
    let x = random(seed)?;
    let reference = random(seed.wrapping_add(1))?;
    let grid = grid_for(&a.grid)?;
    let bins = bins_for(range, &BinArgs { bins: a.bins, sigma: a.sigma })?;
    // a zero γ would bypass the attention branch entirely
    let rule = match build_rule(a.rule, grid.len(), seed, None)? {
        AggregationRule::Attention(p) => AggregationRule::Attention(AttentionParams { gamma: 1.0, ..p }),
        other => other,
    };
    let tl = TextureLoss::new(grid, bins, a.descriptor.into(), rule);
    let target = tl.target(&reference)?;
    let report = finite_diff_check(&x, &TextureObjective { loss: &tl, target: &target }, a.step)?;
    let passed = report.passes(a.tol);
    print_json(&json!({
        "rule": tl.rule.name(),
        "descriptor": tl.kind.name(),
        "size": a.size,
        "max_abs_err": report.max_abs_err,
        "max_rel_err": report.max_rel_err,
        "worst_pixel": [report.worst_pixel.0, report.worst_pixel.1],
        "step": report.step,
        "tol": a.tol,
        "passed": passed,
    }));
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn denoise(a: DenoiseArgs, seed: u64) -> CmdResult {
    let (clean, noisy) = match (&a.clean, &a.noisy) {
        (Some(c), Some(n)) => (load(c, &a.format)?, load(n, &a.format)?),
        _ => synth::checkerboard_benchmark(seed)?,
    };
    let grid = grid_for(&a.grid)?;
    let cfg = OptimConfig {
        steps: a.steps,
        lr: a.lr,
        optimizer: match a.optimizer {
            OptimizerArg::Adam => Optimizer::ADAM,
            OptimizerArg::Gd => Optimizer::Gd,
        },
        rule: build_rule(a.rule, grid.len(), seed, None)?,
        kinds: a.descriptors.iter().map(|&d| DescriptorKind::from(d)).collect(),
        bins: bins_for(noisy.range(), &a.bins)?,
        grid,
        lambda_txt: a.lambda_txt,
        lambda_pix: a.lambda_pix,
        competitor: a.competitor.map(|c| {
            let c = Competitor::from(c);
            (c, a.lambda_competitor.unwrap_or(c.default_weight()))
        }),
        train_attention: a.train_attention,
        seed,
        ..OptimConfig::benchmark()
    };

    if a.compare {
        let report = compare_losses(&noisy, &clean, &cfg, &RuleName::ALL, &[Competitor::SsimL, Competitor::Edge])?;
        emit(None, &report.to_csv())?;
        return Ok(ExitCode::SUCCESS);
    }

    let (out, trace) = denoise_pixels(&noisy, &clean, &cfg)?;
    if let Some(p) = &a.out {
        save(&out, p)?;
    }
    if let Some(p) = &a.trace {
        write_atomic(p, trace.to_csv().as_bytes())?;
    }
    let first = trace.initial();
    let best = trace.best();
    let mut summary = json!({
        "steps": a.steps,
        "best_step": trace.best_step,
        "initial_l_txt": num(first.l_txt),
        "final_l_txt": num(best.l_txt),
        "initial_total": num(first.total),
        "final_total": num(best.total),
        "psnr_input": first.psnr.map(num),
        "psnr_output": best.psnr.map(num),
    });
    if let Some(p) = &trace.attention {
        summary["attention"] = serde_json::to_value(p).map_err(texloss::Error::from)?;
    }
    print_json(&summary);
    Ok(ExitCode::SUCCESS)
}

fn metrics(a: MetricsArgs) -> CmdResult {
    let x = load(&a.a, &a.format)?;
    let y = load(&a.b, &a.format)?;
    let mut params = SsimParams::for_image(&y);
    if let WindowArg::Global = a.window {
        params = params.global();
    }
    print_json(&json!({
        "mse": num(mse(&x, &y)?),
        "psnr": num(psnr(&x, &y, a.peak.into())?),
        "ssim": num(ssim(&x, &y, &params)?),
    }));
    Ok(ExitCode::SUCCESS)
}

fn matching(a: MatchArgs) -> CmdResult {
    let source = load(&a.noisy, &a.format)?;
    let targets = a
        .denoised
        .iter()
        .map(|p| load(p, &a.format))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = match_scores(&source, &targets, a.r, a.t)?;
    let self_scores = match_scores(&source, std::slice::from_ref(&source), a.r, a.t)?;

    let mut csv = String::from("image,template,score\n");
    for (i, s) in scores.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{}", i / a.r, i % a.r, s);
    }
    if let Some(p) = &a.scores {
        write_atomic(p, csv.as_bytes())?;
    }
    let dist = kde_auto(&scores, a.points)?;
    if let Some(p) = &a.kde {
        write_atomic(p, dist.to_csv().as_bytes())?;
    }
    let self_mean = self_scores.iter().sum::<f64>() / self_scores.len() as f64;
    print_json(&json!({
        "count": scores.len(),
        "mean": dist.mean(),
        "bandwidth": dist.bandwidth,
        "self_match_mean": self_mean,
    }));
    Ok(ExitCode::SUCCESS)
}

fn rank(a: RankArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.input).map_err(texloss::Error::from)?;
    let ranked = pd_rank(&read_pd_csv(&text)?)?;
    emit(a.out.as_deref(), &ranked_to_csv(&ranked))?;
    Ok(ExitCode::SUCCESS)
}

fn bench(a: BenchArgs, seed: u64) -> CmdResult {
    let res = run_scaling(&a.sizes, &a.bins, a.repeats, seed)?;
    emit(a.out.as_deref(), &res.to_csv())?;
    if a.out.is_some() {
        let slopes: Vec<Value> = a
            .bins
            .iter()
            .filter_map(|&n| res.slope_vs_pixels(BenchMode::Hard, n).ok().map(|s| json!({"n": n, "hard_vs_pixels": s})))
            .collect();
        print_json(&json!({ "rows": res.rows.len(), "slopes": slopes }));
    }
    Ok(ExitCode::SUCCESS)
}
