use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use inflow_core::attention::{AttentionGate, AttentionVerdict};
use inflow_core::data::{encode_dataset, load_dataset, DataBatch};
use inflow_core::flow::{
    encode_checkpoint, load_checkpoint, train, FlowConfig, FlowModel, Gate, Init, SubnetKind, SubnetSpec, TrainConfig,
};
use inflow_core::fsio::write_atomic;
use inflow_core::rng::substream;
use inflow_core::scoring::{emit_histogram, evaluate, likelihood_threshold, LikelihoodReport};
use inflow_core::{Error, Exec};
use rand::seq::index;

use crate::config::RunConfig;
use crate::error::{usage, CliError, CliResult};

/// Stream of the run seed used to pick the retained reference subset.
const REFERENCE_STREAM: u64 = 2;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const REFERENCE_STEM: &str = "reference";

/// Files are rendered completely in memory before anything is written, so
/// a failing command leaves no output behind; each file is then replaced
/// atomically.
fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(Error::Io { path: dir.to_path_buf(), source: e }))?;
    files
        .iter()
        .map(|(name, bytes)| {
            let p = dir.join(name);
            write_atomic(&p, bytes)?;
            Ok(p)
        })
        .collect()
}

/// IDX for images (rounded to bytes), CSV for vectors.
fn encode_batch(batch: &DataBatch) -> CliResult<(Vec<u8>, &'static str)> {
    let batch = if batch.is_image() { batch.quantize_bytes() } else { batch.clone() };
    encode_dataset(&batch).map_err(CliError::Runtime)
}

fn reference_ext(shape: &[usize]) -> &'static str {
    if shape.len() == 3 {
        "idx"
    } else {
        "csv"
    }
}

pub fn model_config(cfg: &RunConfig, input_shape: &[usize]) -> CliResult<FlowConfig> {
    let image = input_shape.len() == 3;
    let kind = cfg.model.subnet.unwrap_or(if image { SubnetKind::Conv } else { SubnetKind::Dense });
    let hidden = cfg.model.hidden.clone().unwrap_or_else(|| match kind {
        SubnetKind::Conv => SubnetSpec::image_default().hidden,
        SubnetKind::Dense => vec![64, 64],
    });
    Ok(FlowConfig {
        blocks: cfg.model.blocks,
        input_shape: input_shape.to_vec(),
        subnet: SubnetSpec { kind, hidden },
        shared: cfg.model.shared,
        perm_seed: cfg.model.perm_seed,
        init: Init::Train,
        init_seed: cfg.model.init_seed,
    })
}

pub fn cmd_train(cfg: &RunConfig, exec: Exec) -> CliResult<String> {
    let spec = cfg.train.data.as_ref().ok_or_else(|| usage("`train.data` is required for train"))?;
    let data = spec.materialize(cfg.seed)?;
    let mut model = FlowModel::new(model_config(cfg, data.sample_shape())?).map_err(CliError::input)?;
    let tc = TrainConfig {
        epochs: cfg.train.epochs,
        steps_per_epoch: cfg.train.steps,
        batch_size: cfg.train.batch,
        seed: cfg.seed,
        adam: cfg.train.adam,
        exec,
    };
    let initial = model.nll(&data)?;
    let report = train(&mut model, &data, &tc)?;
    let fin = model.nll(&data)?;

    let keep = cfg.attention.reference_size.min(data.len());
    let mut idx = index::sample(&mut substream(cfg.seed, REFERENCE_STREAM), data.len(), keep).into_vec();
    idx.sort_unstable();
    let (reference, ext) = encode_batch(&data.select(&idx))?;

    let mut loss = String::from("step,loss\n");
    for (i, l) in report.losses.iter().enumerate() {
        let _ = writeln!(loss, "{i},{l}");
    }
    let paths = write_outputs(
        &cfg.output,
        &[
            (CHECKPOINT_FILE.to_string(), encode_checkpoint(&model)),
            (format!("{REFERENCE_STEM}.{ext}"), reference),
            ("loss.csv".to_string(), loss.into_bytes()),
        ],
    )?;
    Ok(format!(
        "trained {} parameters for {} steps on {} samples: nll {initial:.4} -> {fin:.4}\nwrote {}",
        model.param_count(),
        report.losses.len(),
        data.len(),
        paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
    ))
}

/// `[start, end)` ranges of size `m`; a trailing single sample joins the
/// previous batch. `m = 0` means one batch.
fn batch_ranges(n: usize, m: usize) -> Vec<(usize, usize)> {
    let m = if m == 0 { n } else { m };
    let mut out: Vec<(usize, usize)> = (0..n).step_by(m).map(|s| (s, (s + m).min(n))).collect();
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s < 2) {
        let (_, e) = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").1 = e;
    }
    out
}

pub struct Detection {
    pub verdicts: Vec<((usize, usize), AttentionVerdict)>,
    pub report: LikelihoodReport,
}

/// Gates every test batch against the reference and scores it with the
/// resulting `c`.
pub fn detect(
    model: &FlowModel,
    reference: &DataBatch,
    test: &DataBatch,
    cfg: &RunConfig,
    exec: Exec,
) -> CliResult<Detection> {
    let shape = &model.config().input_shape;
    for (what, b) in [("reference", reference), ("test", test)] {
        if b.sample_shape() != shape.as_slice() {
            return Err(usage(format!(
                "{what} samples have shape {:?} but the model expects {shape:?}",
                b.sample_shape()
            )));
        }
    }
    if test.len() < 2 {
        return Err(usage(format!(
            "test set has {} sample(s); the attention gate compares batches of at least 2",
            test.len()
        )));
    }
    let gate = AttentionGate::new(reference, cfg.attention.clone(), exec).map_err(CliError::input)?;
    let mut verdicts = Vec::new();
    let mut logliks = Vec::with_capacity(test.len());
    let mut gates = Vec::with_capacity(test.len());
    for (s, e) in batch_ranges(test.len(), cfg.attention.test_batch) {
        let part = test.slice(s, e);
        let v = gate.verdict(&part, exec)?;
        logliks.extend(model.log_likelihood(&part, v.gate, exec)?);
        gates.extend(std::iter::repeat_n(v.gate, e - s));
        verdicts.push(((s, e), v));
    }
    let th = likelihood_threshold(cfg.threshold.alpha, model.latent_dim(), cfg.threshold.sigma)?;
    // The report carries `c = 1` only if every batch kept the gate open.
    let gate = if gates.iter().all(|&g| g == Gate::One) { Gate::One } else { Gate::Zero };
    Ok(Detection { verdicts, report: LikelihoodReport::new(logliks, gate, th) })
}

pub fn load_reference(cfg: &RunConfig, model: &FlowModel) -> CliResult<DataBatch> {
    let path =
        cfg.detect.reference.clone().unwrap_or_else(|| {
            cfg.output.join(format!("{REFERENCE_STEM}.{}", reference_ext(&model.config().input_shape)))
        });
    load_dataset(&path).map_err(CliError::input)
}

fn render_detection(name: &str, alpha: f64, d: &Detection) -> (Vec<(String, Vec<u8>)>, String) {
    let Detection { verdicts, report } = d;
    let mut scores = String::from("index,batch,loglik,c,label\n");
    let mut gates = String::from("batch,start,size,mmd,p_value,c,bandwidth\n");
    for (b, ((s, e), v)) in verdicts.iter().enumerate() {
        let _ = writeln!(gates, "{b},{s},{},{},{},{},{}", e - s, v.mmd_observed, v.p_value, v.gate, v.bandwidth);
        for i in *s..*e {
            let _ = writeln!(scores, "{i},{b},{},{},{}", report.logliks[i], v.gate, report.labels[i]);
        }
    }
    let closed = verdicts.iter().filter(|(_, v)| v.gate == Gate::Zero).count();
    let mean_p = verdicts.iter().map(|(_, v)| v.p_value).sum::<f64>() / verdicts.len() as f64;
    let outs = report.out_count();
    let frac = outs as f64 / report.labels.len() as f64;
    let c = match closed {
        0 => "1".to_string(),
        k if k == verdicts.len() => "0".to_string(),
        _ => "mixed".to_string(),
    };
    let summary = format!(
        "name={name}\nsamples={}\nbatches={}\nclosed_batches={closed}\nmean_p_value={mean_p}\nc={c}\n\
         alpha={alpha}\nthreshold={}\nout={outs}\nout_fraction={frac}\n",
        report.labels.len(),
        verdicts.len(),
        report.threshold,
    );
    let line = format!(
        "{name}: p_value={mean_p:.3} c={c} L_th={:.4} out={outs}/{} ({:.1}%)",
        report.threshold,
        report.labels.len(),
        100.0 * frac
    );
    let files = vec![
        (format!("scores_{name}.csv"), scores.into_bytes()),
        (format!("gate_{name}.csv"), gates.into_bytes()),
        (format!("summary_{name}.txt"), summary.into_bytes()),
    ];
    (files, line)
}

pub fn cmd_detect(cfg: &RunConfig, exec: Exec) -> CliResult<String> {
    if cfg.detect.sets.is_empty() {
        return Err(usage("detect needs `detect.data` or at least one `detect.data.<name>`"));
    }
    let ckpt = cfg.detect.checkpoint.clone().unwrap_or_else(|| cfg.output.join(CHECKPOINT_FILE));
    let model = load_checkpoint(&ckpt).map_err(CliError::input)?;
    let reference = load_reference(cfg, &model)?;
    let mut files = Vec::new();
    let mut lines = Vec::new();
    for (name, spec) in &cfg.detect.sets {
        let test = spec.materialize(cfg.seed)?;
        let d = detect(&model, &reference, &test, cfg, exec)?;
        let (f, line) = render_detection(name, cfg.threshold.alpha, &d);
        files.extend(f);
        lines.push(line);
    }
    write_outputs(&cfg.output, &files)?;
    Ok(lines.join("\n"))
}

/// Reads the `loglik` column of a score file (or its only column).
pub fn read_scores(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(usage(format!("{}: empty score file", path.display())));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = match cols.iter().position(|&c| c == "loglik") {
        Some(c) => c,
        None if cols.len() == 1 => 0,
        None => return Err(usage(format!("{}: no `loglik` column", path.display()))),
    };
    let scores = lines
        .map(|(i, l)| {
            l.split(',')
                .nth(col)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| !v.is_nan())
                .ok_or_else(|| usage(format!("{}: line {}: bad score", path.display(), i + 1)))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if scores.is_empty() {
        return Err(usage(format!("{}: empty score file", path.display())));
    }
    Ok(scores)
}

pub fn cmd_eval(cfg: &RunConfig) -> CliResult<String> {
    let in_path = cfg.eval.in_scores.as_ref().ok_or_else(|| usage("`eval.in` is required for eval"))?;
    if cfg.eval.tests.is_empty() {
        return Err(usage("eval needs at least one `eval.test.<name>` score file"));
    }
    let pos = read_scores(in_path)?;
    let tests = cfg.eval.tests.iter().map(|(n, p)| Ok((n.as_str(), read_scores(p)?))).collect::<CliResult<Vec<_>>>()?;

    let mut table = String::from("dataset,aucroc,fpr95,aucpr,positives,negatives\n");
    let mut pretty = format!("{:<20} {:>8} {:>8} {:>8}\n", "dataset", "AUCROC", "FPR95", "AUCPR");
    for (name, neg) in &tests {
        let m = evaluate(&pos, neg)?;
        let _ = writeln!(table, "{name},{:.6},{:.6},{:.6},{},{}", m.aucroc, m.fpr95, m.aucpr, m.positives, m.negatives);
        let _ = writeln!(pretty, "{name:<20} {:>8.4} {:>8.4} {:>8.4}", m.aucroc, m.fpr95, m.aucpr);
    }
    let mut series: Vec<(&str, &[f64])> = vec![("in", &pos)];
    series.extend(tests.iter().map(|(n, s)| (*n, s.as_slice())));
    if series.iter().flat_map(|(_, s)| s.iter()).any(|v| !v.is_finite()) {
        return Err(usage("score files contain infinite log-likelihoods"));
    }
    write_outputs(&cfg.output, &[("metrics.csv".to_string(), table.into_bytes())])?;
    emit_histogram(&series, cfg.eval.bins, &cfg.output.join("histogram"))?;
    Ok(pretty.trim_end().to_string())
}

pub fn cmd_gendata(cfg: &RunConfig) -> CliResult<String> {
    let spec = cfg.gendata.data.as_ref().ok_or_else(|| usage("`gendata.data` is required for gendata"))?;
    let batch = spec.materialize(cfg.seed)?;
    let (bytes, ext) = encode_batch(&batch)?;
    let paths = write_outputs(&cfg.output, &[(format!("{}.{ext}", cfg.gendata.name), bytes)])?;
    Ok(format!("wrote {} samples of shape {:?} to {}", batch.len(), batch.sample_shape(), paths[0].display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_ranges_merge_singletons() {
        assert_eq!(batch_ranges(10, 5), vec![(0, 5), (5, 10)]);
        assert_eq!(batch_ranges(11, 5), vec![(0, 5), (5, 11)]);
        assert_eq!(batch_ranges(12, 5), vec![(0, 5), (5, 10), (10, 12)]);
        assert_eq!(batch_ranges(7, 0), vec![(0, 7)]);
        assert_eq!(batch_ranges(3, 50), vec![(0, 3)]);
    }
}
