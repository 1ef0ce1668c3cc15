//! `mtasr loss`: evaluate alignment losses on tensors from a JSON file.
//!
//! The input is one instance object or an array of them. Dense tensors use
//! `{"T", "U", "V", "blank", "logits": [T*(U+1)*V row-major], "labels"}`
//! (for CTC, `"logits"` is `T*V` and `"U"` is omitted); the trivial-joiner
//! form is `{"enc": [T][V], "pred": [U+1][V], "blank", "labels"}`; masking
//! instances use `{"estimates": [C][F][T], "targets": [C][F][T]}`. Raw
//! values are log-softmax-normalized internally; pass `"normalized": true`
//! when rows are already normalized.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use mtasr_core::lattice::{
    self, FrameLogits, LogitsTensor, Matrix, OccupancyGrid, Reduction, TrivialJoinerInput,
    WindowLogits,
};
use mtasr_core::oracles;
use serde::Deserialize;
use serde_json::json;

use crate::{output, provenance};

/// Step for central finite differences in `--grad-check`.
const FD_STEP: f64 = 1e-5;
/// Maximum scaled error accepted by `--grad-check`.
const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Full-sum transducer loss over a dense or trivial-joiner tensor.
    Rnnt,
    /// Windowed transducer loss on pruned bounds (trivial-joiner input).
    Pruned,
    /// Frame-level CTC loss.
    Ctc,
    /// Masking mean-squared-error loss.
    Mask,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Rnnt => "rnnt",
            Mode::Pruned => "pruned",
            Mode::Ctc => "ctc",
            Mode::Mask => "mask",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReductionArg {
    Sum,
    Mean,
}

impl From<ReductionArg> for Reduction {
    fn from(arg: ReductionArg) -> Reduction {
        match arg {
            ReductionArg::Sum => Reduction::Sum,
            ReductionArg::Mean => Reduction::Mean,
        }
    }
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Which loss to evaluate.
    #[arg(long, value_enum)]
    pub mode: Mode,

    /// Input JSON file: one instance object or an array of them.
    #[arg(long)]
    pub input: PathBuf,

    /// Window size S for --mode pruned (default U+1, the exact full-sum).
    #[arg(long)]
    pub window: Option<usize>,

    /// Verify analytic gradients against central finite differences; the
    /// command fails if any instance exceeds the tolerance.
    #[arg(long)]
    pub grad_check: bool,

    /// Also write posterior occupancy grids (rnnt/pruned modes) to this path.
    #[arg(long)]
    pub occupancy: Option<PathBuf>,

    /// How the per-instance losses combine into the reported total.
    #[arg(long, value_enum, default_value_t = ReductionArg::Sum)]
    pub reduction: ReductionArg,

    /// Output report path (JSON; default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One instance as it appears in the input file. All fields optional at
/// parse time; each mode checks for the combination it needs.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceSpec {
    #[serde(rename = "T")]
    frames: Option<usize>,
    #[serde(rename = "U")]
    label_count: Option<usize>,
    #[serde(rename = "V")]
    vocab: Option<usize>,
    blank: Option<usize>,
    logits: Option<Vec<f64>>,
    labels: Option<Vec<usize>>,
    #[serde(default)]
    normalized: bool,
    enc: Option<Vec<Vec<f64>>>,
    pred: Option<Vec<Vec<f64>>>,
    estimates: Option<Vec<Vec<Vec<f64>>>>,
    targets: Option<Vec<Vec<Vec<f64>>>>,
}

/// What evaluating one instance produced.
struct InstanceResult {
    loss: f64,
    detail: serde_json::Map<String, serde_json::Value>,
    occupancy: Option<OccupancyGrid>,
}

pub fn run(args: &LossArgs) -> anyhow::Result<()> {
    if args.window.is_some() && args.mode != Mode::Pruned {
        anyhow::bail!("--window applies only to --mode pruned");
    }
    if args.occupancy.is_some() && !matches!(args.mode, Mode::Rnnt | Mode::Pruned) {
        anyhow::bail!("--occupancy applies only to --mode rnnt or pruned");
    }

    let bytes = std::fs::read(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let parsed: serde_json::Value = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing {}", args.input.display()))?;
    let raw_instances: Vec<serde_json::Value> = match parsed {
        serde_json::Value::Array(items) => items,
        object @ serde_json::Value::Object(_) => vec![object],
        other => anyhow::bail!("expected an instance object or array, got {other}"),
    };
    if raw_instances.is_empty() {
        anyhow::bail!("{} contains no instances", args.input.display());
    }

    let want_occupancy = args.occupancy.is_some();
    let mut results = Vec::with_capacity(raw_instances.len());
    let mut failed_grad_checks = 0usize;
    for (index, raw) in raw_instances.into_iter().enumerate() {
        let spec: InstanceSpec = serde_json::from_value(raw)
            .with_context(|| format!("instance {index}: unrecognized field or wrong type"))?;
        let mut result = evaluate(args.mode, &spec, args.window, args.grad_check, want_occupancy)
            .with_context(|| format!("instance {index}"))?;
        if let Some(check) = result.detail.get("grad_check") {
            if check["pass"] == json!(false) {
                failed_grad_checks += 1;
            }
        }
        result.detail.insert("loss".to_owned(), loss_value(result.loss));
        results.push(result);
    }

    let losses: Vec<f64> = results.iter().map(|r| r.loss).collect();
    let total = lattice::reduce(&losses, args.reduction.into());

    let mut report = serde_json::Map::new();
    report.insert("mode".to_owned(), json!(args.mode.name()));
    report.insert(
        "reduction".to_owned(),
        json!(match args.reduction {
            ReductionArg::Sum => "sum",
            ReductionArg::Mean => "mean",
        }),
    );
    report.insert("count".to_owned(), json!(results.len()));
    report.insert("loss".to_owned(), loss_value(total));
    report.insert(
        "instances".to_owned(),
        json!(results
            .iter()
            .map(|r| serde_json::Value::Object(r.detail.clone()))
            .collect::<Vec<_>>()),
    );

    let header = provenance::provenance(None, &[&args.input])?;
    match &args.out {
        Some(path) => {
            output::write_json_with_provenance(path, &header, serde_json::Value::Object(report))?
        }
        None => {
            let mut object = report;
            object.insert("provenance".to_owned(), serde_json::to_value(&header)?);
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::Value::Object(object))?
            );
        }
    }

    if let Some(path) = &args.occupancy {
        let grids: Vec<serde_json::Value> = results
            .iter()
            .map(|r| {
                let grid = r.occupancy.as_ref().expect("occupancy computed for rnnt/pruned");
                json!({
                    "frames": grid.frames,
                    "labels": grid.labels,
                    "node": grid.node,
                    "emit": grid.emit,
                    "blank": grid.blank,
                    "emit_total": grid.emit.iter().sum::<f64>(),
                    "blank_total": grid.blank.iter().sum::<f64>(),
                })
            })
            .collect();
        output::write_json_with_provenance(path, &header, json!({ "instances": grids }))?;
    }

    if failed_grad_checks > 0 {
        anyhow::bail!("gradient check failed on {failed_grad_checks} instance(s)");
    }
    Ok(())
}

/// Infeasible losses are +inf, which JSON cannot hold; they serialize as null.
fn loss_value(loss: f64) -> serde_json::Value {
    if loss.is_finite() {
        json!(loss)
    } else {
        serde_json::Value::Null
    }
}

fn evaluate(
    mode: Mode,
    spec: &InstanceSpec,
    window: Option<usize>,
    grad_check: bool,
    want_occupancy: bool,
) -> anyhow::Result<InstanceResult> {
    match mode {
        Mode::Rnnt => evaluate_rnnt(spec, grad_check, want_occupancy),
        Mode::Pruned => evaluate_pruned(spec, window, grad_check, want_occupancy),
        Mode::Ctc => evaluate_ctc(spec, grad_check),
        Mode::Mask => evaluate_mask(spec, grad_check),
    }
}

fn labels_of(spec: &InstanceSpec) -> anyhow::Result<Vec<usize>> {
    let labels = spec
        .labels
        .clone()
        .ok_or_else(|| anyhow::anyhow!("missing \"labels\""))?;
    if let Some(declared) = spec.label_count {
        if declared != labels.len() {
            anyhow::bail!(
                "\"U\" is {declared} but \"labels\" has {} entries",
                labels.len()
            );
        }
    }
    Ok(labels)
}

fn dense_tensor(spec: &InstanceSpec, labels: &[usize]) -> anyhow::Result<LogitsTensor> {
    let frames = spec.frames.ok_or_else(|| anyhow::anyhow!("missing \"T\""))?;
    let vocab = spec.vocab.ok_or_else(|| anyhow::anyhow!("missing \"V\""))?;
    let blank = spec.blank.ok_or_else(|| anyhow::anyhow!("missing \"blank\""))?;
    let values = spec
        .logits
        .clone()
        .ok_or_else(|| anyhow::anyhow!("missing \"logits\""))?;
    let tensor = if spec.normalized {
        LogitsTensor::from_normalized(frames, labels.len(), vocab, blank, values)?
    } else {
        LogitsTensor::from_raw(frames, labels.len(), vocab, blank, values)?
    };
    Ok(tensor)
}

fn trivial_input(spec: &InstanceSpec, labels: &[usize]) -> anyhow::Result<TrivialJoinerInput> {
    let enc_rows = spec
        .enc
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("missing \"enc\""))?;
    let pred_rows = spec
        .pred
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("missing \"pred\""))?;
    let blank = spec.blank.unwrap_or(0);
    let enc = matrix_from_rows(enc_rows).context("\"enc\"")?;
    let pred = matrix_from_rows(pred_rows).context("\"pred\"")?;
    if pred.rows() != labels.len() + 1 {
        anyhow::bail!(
            "\"pred\" has {} rows, expected U+1 = {}",
            pred.rows(),
            labels.len() + 1
        );
    }
    Ok(TrivialJoinerInput::new(enc, pred, blank)?)
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> anyhow::Result<Matrix> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != width) {
        anyhow::bail!("rows have unequal lengths");
    }
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::new(height, width, data)?)
}

fn grad_check_object(max_rel_err: f64) -> serde_json::Value {
    json!({
        "max_rel_err": max_rel_err,
        "tolerance": FD_TOLERANCE,
        "pass": max_rel_err <= FD_TOLERANCE,
    })
}

fn evaluate_rnnt(
    spec: &InstanceSpec,
    grad_check: bool,
    want_occupancy: bool,
) -> anyhow::Result<InstanceResult> {
    let labels = labels_of(spec)?;
    let mut detail = serde_json::Map::new();

    if spec.enc.is_some() || spec.pred.is_some() {
        if spec.logits.is_some() {
            anyhow::bail!("give either \"logits\" or \"enc\"/\"pred\", not both");
        }
        let input = trivial_input(spec, &labels)?;
        let tensor = lattice::trivial_join(&input)?;
        let out = lattice::rnnt_loss(&tensor, &labels)?;
        if grad_check {
            let err = check_rnnt_trivial_grad(&input, &labels, &out.grad)?;
            detail.insert("grad_check".to_owned(), grad_check_object(err));
        }
        let occupancy = want_occupancy
            .then(|| lattice::occupancy(&tensor, &labels))
            .transpose()?;
        return Ok(InstanceResult {
            loss: out.loss,
            detail,
            occupancy,
        });
    }

    let tensor = dense_tensor(spec, &labels)?;
    let out = lattice::rnnt_loss(&tensor, &labels)?;
    if grad_check {
        let err = check_dense_rnnt_grad(&tensor, &labels, &out.grad)?;
        detail.insert("grad_check".to_owned(), grad_check_object(err));
    }
    let occupancy = want_occupancy
        .then(|| lattice::occupancy(&tensor, &labels))
        .transpose()?;
    Ok(InstanceResult {
        loss: out.loss,
        detail,
        occupancy,
    })
}

/// Finite differences on the dense raw tensor values. The loss normalizes
/// internally, so perturbing raw values is well-defined whether or not the
/// input rows arrived normalized.
fn check_dense_rnnt_grad(
    tensor: &LogitsTensor,
    labels: &[usize],
    analytic: &[f64],
) -> anyhow::Result<f64> {
    let frames = tensor.frames();
    let label_count = tensor.labels();
    let vocab = tensor.vocab();
    let blank = tensor.blank();
    let mut values: Vec<f64> = (0..frames)
        .flat_map(|t| (0..=label_count).flat_map(move |u| (0..vocab).map(move |v| (t, u, v))))
        .map(|(t, u, v)| tensor.log_prob(t, u, v))
        .collect();
    let labels = labels.to_vec();
    let numeric = oracles::finite_difference_grad(
        &mut values,
        |vals| {
            let tensor =
                LogitsTensor::from_raw(frames, label_count, vocab, blank, vals.to_vec())
                    .expect("shape preserved");
            lattice::rnnt_loss(&tensor, &labels).expect("loss defined").loss
        },
        FD_STEP,
    );
    Ok(oracles::max_scaled_error(analytic, &numeric))
}

/// Finite differences on the concatenated enc/pred parameters. The joined
/// raw value at (t, u, v) is enc[t][v] + pred[u][v], so the analytic chain
/// gradient is the dense gradient summed over u (for enc) and over t (for
/// pred).
fn check_rnnt_trivial_grad(
    input: &TrivialJoinerInput,
    labels: &[usize],
    dense_grad: &[f64],
) -> anyhow::Result<f64> {
    let frames = input.frames();
    let slots = input.labels() + 1;
    let vocab = input.vocab();
    let blank = input.blank;

    let mut analytic = vec![0.0; frames * vocab + slots * vocab];
    let (enc_grad, pred_grad) = analytic.split_at_mut(frames * vocab);
    for t in 0..frames {
        for u in 0..slots {
            for v in 0..vocab {
                let g = dense_grad[(t * slots + u) * vocab + v];
                enc_grad[t * vocab + v] += g;
                pred_grad[u * vocab + v] += g;
            }
        }
    }

    let mut params: Vec<f64> = Vec::with_capacity(frames * vocab + slots * vocab);
    params.extend_from_slice(input.enc.data());
    params.extend_from_slice(input.pred.data());
    let labels = labels.to_vec();
    let numeric = oracles::finite_difference_grad(
        &mut params,
        |vals| {
            let (enc_vals, pred_vals) = vals.split_at(frames * vocab);
            let enc = Matrix::new(frames, vocab, enc_vals.to_vec()).expect("shape preserved");
            let pred = Matrix::new(slots, vocab, pred_vals.to_vec()).expect("shape preserved");
            let input = TrivialJoinerInput::new(enc, pred, blank).expect("shape preserved");
            let tensor = lattice::trivial_join(&input).expect("join defined");
            lattice::rnnt_loss(&tensor, &labels).expect("loss defined").loss
        },
        FD_STEP,
    );
    Ok(oracles::max_scaled_error(&analytic, &numeric))
}

fn evaluate_pruned(
    spec: &InstanceSpec,
    window: Option<usize>,
    grad_check: bool,
    want_occupancy: bool,
) -> anyhow::Result<InstanceResult> {
    if spec.enc.is_none() || spec.pred.is_none() {
        anyhow::bail!("--mode pruned needs the trivial-joiner form (\"enc\" and \"pred\")");
    }
    let labels = labels_of(spec)?;
    let input = trivial_input(spec, &labels)?;
    let window = window.unwrap_or(labels.len() + 1);
    let bounds = lattice::prune_bounds(&input, &labels, window)?;
    let window_logits = WindowLogits::from_trivial(&input, bounds)?;
    let out = lattice::pruned_rnnt_loss(&window_logits, &labels)?;

    let mut detail = serde_json::Map::new();
    detail.insert(
        "window".to_owned(),
        json!(window_logits.bounds().window()),
    );
    if grad_check {
        let err = check_pruned_grad(&window_logits, &labels, &out.grad)?;
        detail.insert("grad_check".to_owned(), grad_check_object(err));
    }
    // Occupancy is a full-lattice posterior; report it for the unpruned
    // trivial-joiner lattice.
    let occupancy = want_occupancy
        .then(|| lattice::occupancy_from_trivial(&input, &labels))
        .transpose()?;
    Ok(InstanceResult {
        loss: out.loss,
        detail,
        occupancy,
    })
}

/// Finite differences on the raw window values with the bounds held fixed.
fn check_pruned_grad(
    window: &WindowLogits,
    labels: &[usize],
    analytic: &[f64],
) -> anyhow::Result<f64> {
    let bounds = window.bounds().clone();
    let vocab = window.vocab();
    let blank = window.blank();
    let mut values = window.values().to_vec();
    let labels = labels.to_vec();
    let numeric = oracles::finite_difference_grad(
        &mut values,
        |vals| {
            let window = WindowLogits::from_raw(bounds.clone(), vocab, blank, vals.to_vec())
                .expect("shape preserved");
            lattice::pruned_rnnt_loss(&window, &labels)
                .expect("loss defined")
                .loss
        },
        FD_STEP,
    );
    Ok(oracles::max_scaled_error(analytic, &numeric))
}

fn evaluate_ctc(spec: &InstanceSpec, grad_check: bool) -> anyhow::Result<InstanceResult> {
    if spec.enc.is_some() || spec.pred.is_some() {
        anyhow::bail!("--mode ctc takes frame logits (\"T\", \"V\", \"logits\"), not enc/pred");
    }
    let labels = labels_of(spec)?;
    let frames = spec.frames.ok_or_else(|| anyhow::anyhow!("missing \"T\""))?;
    let vocab = spec.vocab.ok_or_else(|| anyhow::anyhow!("missing \"V\""))?;
    let blank = spec.blank.ok_or_else(|| anyhow::anyhow!("missing \"blank\""))?;
    let values = spec
        .logits
        .clone()
        .ok_or_else(|| anyhow::anyhow!("missing \"logits\""))?;
    let logits = if spec.normalized {
        FrameLogits::from_normalized(frames, vocab, blank, values)?
    } else {
        FrameLogits::from_raw(frames, vocab, blank, values)?
    };
    let out = lattice::ctc_loss(&logits, &labels)?;

    let mut detail = serde_json::Map::new();
    detail.insert("feasible".to_owned(), json!(out.feasible));
    if grad_check {
        if !out.feasible {
            anyhow::bail!("cannot gradient-check an infeasible instance (loss is infinite)");
        }
        let err = check_ctc_grad(&logits, &labels, &out.grad)?;
        detail.insert("grad_check".to_owned(), grad_check_object(err));
    }
    Ok(InstanceResult {
        loss: out.loss,
        detail,
        occupancy: None,
    })
}

fn check_ctc_grad(
    logits: &FrameLogits,
    labels: &[usize],
    analytic: &[f64],
) -> anyhow::Result<f64> {
    let frames = logits.frames();
    let vocab = logits.vocab();
    let blank = logits.blank();
    let mut values: Vec<f64> = (0..frames)
        .flat_map(|t| logits.row(t).to_vec())
        .collect();
    let labels = labels.to_vec();
    let numeric = oracles::finite_difference_grad(
        &mut values,
        |vals| {
            let logits = FrameLogits::from_raw(frames, vocab, blank, vals.to_vec())
                .expect("shape preserved");
            lattice::ctc_loss(&logits, &labels).expect("loss defined").loss
        },
        FD_STEP,
    );
    Ok(oracles::max_scaled_error(analytic, &numeric))
}

fn evaluate_mask(spec: &InstanceSpec, grad_check: bool) -> anyhow::Result<InstanceResult> {
    let estimates = spec
        .estimates
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("missing \"estimates\""))?;
    let targets = spec
        .targets
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("missing \"targets\""))?;
    let estimates: Vec<Matrix> = estimates
        .iter()
        .map(|m| matrix_from_rows(m))
        .collect::<anyhow::Result<_>>()
        .context("\"estimates\"")?;
    let targets: Vec<Matrix> = targets
        .iter()
        .map(|m| matrix_from_rows(m))
        .collect::<anyhow::Result<_>>()
        .context("\"targets\"")?;
    let out = lattice::mask_loss(&estimates, &targets)?;

    let mut detail = serde_json::Map::new();
    if grad_check {
        let err = check_mask_grad(&estimates, &targets, &out.grad)?;
        detail.insert("grad_check".to_owned(), grad_check_object(err));
    }
    Ok(InstanceResult {
        loss: out.loss,
        detail,
        occupancy: None,
    })
}

fn check_mask_grad(
    estimates: &[Matrix],
    targets: &[Matrix],
    analytic: &[Matrix],
) -> anyhow::Result<f64> {
    let shapes: Vec<(usize, usize)> = estimates.iter().map(|m| (m.rows(), m.cols())).collect();
    let analytic_flat: Vec<f64> = analytic.iter().flat_map(|m| m.data().to_vec()).collect();
    let mut params: Vec<f64> = estimates.iter().flat_map(|m| m.data().to_vec()).collect();
    let targets = targets.to_vec();
    let numeric = oracles::finite_difference_grad(
        &mut params,
        |vals| {
            let mut offset = 0;
            let estimates: Vec<Matrix> = shapes
                .iter()
                .map(|&(rows, cols)| {
                    let data = vals[offset..offset + rows * cols].to_vec();
                    offset += rows * cols;
                    Matrix::new(rows, cols, data).expect("shape preserved")
                })
                .collect();
            lattice::mask_loss(&estimates, &targets)
                .expect("loss defined")
                .loss
        },
        FD_STEP,
    );
    Ok(oracles::max_scaled_error(&analytic_flat, &numeric))
}
