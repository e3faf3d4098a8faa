use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DatasetKind, ReportFormat, RunConfig};
use super::{pnm, AttackArg, Cli, Command};
use crate::arl::{
    compute_bounds, dedup_radii, leakage_attack, radius_sweep, reconstruction_attack, run_pipeline, ArlConfig,
    AttackConfig, Method, ObfuscatedSplit, PipelineOptions, SampleTriplet,
};
use crate::datasets::{
    derive_tasks, export_dir, gen_synthetic, import_dir, load_idx, DatasetSplit, OracleReport, TaskScheme,
    MANIFEST_NAME,
};
use crate::error::{Error, Result};
use crate::metrics::{append_csv, append_jsonl, fmt_num, format_table, read_jsonl, ExperimentReport};
use crate::nn::{Checkpoint, ModelKind, Obfuscator};

/// Metadata written next to the checkpoints of one trained method.
pub const META_NAME: &str = "meta.json";
const ENCODER_FILE: &str = "encoder.fshd";
const TASK_FILE: &str = "task.fshd";
const ADVERSARY_FILE: &str = "adversary.fshd";
const REPORTS_JSONL: &str = "reports.jsonl";
const REPORTS_CSV: &str = "reports.csv";

/// What `attack` needs to rebuild a frozen obfuscator and label its rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub method: Method,
    pub dataset: String,
    pub image_shape: Vec<usize>,
    pub k_t: usize,
    pub k_p: usize,
    pub arl: ArlConfig,
    pub attack: AttackConfig,
    /// Task-model accuracy on the obfuscated test split, percent.
    pub utility: f64,
    /// Fresh-adversary accuracy measured right after training, percent.
    pub privacy: f64,
}

pub(super) fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    if let Command::Defaults = cli.command {
        writeln!(
            out,
            "# Defaults. attack.epochs, attack.batch_size and attack.lr_classifier\n\
             # follow the [arl] values unless set. FRESH_SEED overrides `seed`.\n"
        )?;
        out.write_all(RunConfig::defaults_toml().as_bytes())?;
        return Ok(());
    }
    let cfg = RunConfig::load(cli.config.as_deref())?;
    writeln!(out, "seed = {}", cfg.seed)?;
    match &cli.command {
        Command::GenData { force } => gen_data(&cfg, *force, out),
        Command::Train { mode, bounds, force } => train(&cfg, *mode, *bounds, *force, out),
        Command::Attack { checkpoint_dir, kind } => attack(&cfg, checkpoint_dir, *kind, out),
        Command::Sweep { radii, force } => sweep(&cfg, radii, *force, out),
        Command::Report { output_dir } => report(output_dir.as_deref().unwrap_or(&cfg.output.dir), out),
        Command::Defaults => unreachable!("handled above"),
    }
}

fn dataset_name(cfg: &RunConfig) -> &'static str {
    match cfg.dataset.kind {
        DatasetKind::Synthetic => "synthetic",
        DatasetKind::Idx => "idx",
    }
}

fn build_split(cfg: &RunConfig) -> Result<DatasetSplit> {
    match cfg.dataset.kind {
        DatasetKind::Synthetic => gen_synthetic(&cfg.dataset.synthetic),
        DatasetKind::Idx => {
            let (Some(images), Some(labels)) = (&cfg.dataset.images, &cfg.dataset.labels) else {
                return Err(Error::Config("dataset kind `idx` needs both `images` and `labels`".into()));
            };
            derive_tasks(&load_idx(images, labels)?, TaskScheme::ParityVsDigit, cfg.seed)
        }
    }
}

/// The exported dataset when present, otherwise a freshly built one.
fn load_data(cfg: &RunConfig) -> Result<DatasetSplit> {
    if cfg.dataset.dir.join(MANIFEST_NAME).exists() {
        import_dir(&cfg.dataset.dir)
    } else {
        build_split(cfg)
    }
}

fn refuse_overwrite(path: &Path, what: &str) -> Result<()> {
    Err(Error::Config(format!(
        "{what} already exists at {}; pass --force to overwrite",
        path.display()
    )))
}

fn gen_data(cfg: &RunConfig, force: bool, out: &mut dyn Write) -> Result<()> {
    let dir = &cfg.dataset.dir;
    if dir.join(MANIFEST_NAME).exists() && !force {
        return refuse_overwrite(dir, "a dataset export");
    }
    let split = build_split(cfg)?;
    if cfg.dataset.kind == DatasetKind::Synthetic {
        let o = OracleReport::evaluate(&split.test)?;
        writeln!(
            out,
            "oracle separability on test split: mean-colour {:.4}, stripe orientation {:.4}",
            o.utility_accuracy, o.privacy_accuracy
        )?;
    }
    export_dir(&split, dir)?;
    writeln!(
        out,
        "wrote {} train and {} test examples of shape {:?} to {}",
        split.train.len(),
        split.test.len(),
        split.image_shape(),
        dir.display()
    )?;
    Ok(())
}

fn write_reports(cfg: &RunConfig, rows: &[ExperimentReport]) -> Result<()> {
    fs::create_dir_all(&cfg.output.dir)?;
    for f in &cfg.output.formats {
        match f {
            ReportFormat::Jsonl => append_jsonl(cfg.output.dir.join(REPORTS_JSONL), rows)?,
            ReportFormat::Csv => append_csv(cfg.output.dir.join(REPORTS_CSV), rows)?,
        }
    }
    Ok(())
}

fn print_row(out: &mut dyn Write, r: &ExperimentReport) -> Result<()> {
    let radius = r.r.map(|v| format!(" r={v}")).unwrap_or_default();
    writeln!(
        out,
        "{}{radius}: utility {:.2}  privacy {:.2}  delta {:.2}",
        r.method, r.utility, r.privacy, r.delta
    )?;
    if let Some(s) = r.similarity {
        writeln!(
            out,
            "  reconstruction: mse {:.2}  l1 {:.2}  ssim {:.4}  ms-ssim {:.4}  psnr {}",
            s.mse,
            s.l1,
            s.ssim,
            s.ms_ssim,
            fmt_num(s.psnr)
        )?;
    }
    Ok(())
}

fn dump_samples(dir: &Path, samples: &[SampleTriplet], out: &mut dyn Write) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, s) in samples.iter().enumerate() {
        for (name, img) in [
            ("original", &s.original),
            ("obfuscated", &s.obfuscated),
            ("reconstructed", &s.reconstructed),
        ] {
            pnm::write(img, dir.join(format!("sample{i}_{name}.{}", pnm::extension(img))))?;
        }
    }
    writeln!(out, "wrote {} sample triplets to {}", samples.len(), dir.display())?;
    Ok(())
}

fn checkpoint_dir(cfg: &RunConfig, method: Method) -> PathBuf {
    cfg.output.dir.join("checkpoints").join(method.name())
}

fn samples_dir(cfg: &RunConfig, method: Method) -> PathBuf {
    cfg.output.dir.join("samples").join(method.name())
}

fn train(cfg: &RunConfig, mode: Option<Method>, bounds: bool, force: bool, out: &mut dyn Write) -> Result<()> {
    let arl = ArlConfig {
        method: mode.unwrap_or(cfg.arl.method),
        ..cfg.arl.clone()
    };
    let ck = checkpoint_dir(cfg, arl.method);
    if ck.join(META_NAME).exists() && !force {
        return refuse_overwrite(&ck, "a checkpoint");
    }
    let data = load_data(cfg)?;
    let attack = RunConfig { arl: arl.clone(), ..cfg.clone() }.attack_config();
    let opts = PipelineOptions {
        reconstruction: cfg.attack.reconstruction,
        bounds: if bounds { Some(compute_bounds(&arl, &data)?) } else { None },
    };
    let name = dataset_name(cfg);
    let outcome = run_pipeline(&arl, &attack, &data, name, opts)?;

    fs::create_dir_all(&ck)?;
    for stale in [ENCODER_FILE, TASK_FILE, ADVERSARY_FILE] {
        let p = ck.join(stale);
        if p.exists() {
            fs::remove_file(p)?;
        }
    }
    let sys = &outcome.system;
    if let Some(e) = sys.obfuscator.encoder() {
        Checkpoint::from_module(ModelKind::Encoder, e).write(ck.join(ENCODER_FILE))?;
    }
    Checkpoint::from_module(ModelKind::Classifier, &sys.task_model).write(ck.join(TASK_FILE))?;
    if arl.method.uses_encoder() {
        Checkpoint::from_module(ModelKind::Classifier, &sys.adversary).write(ck.join(ADVERSARY_FILE))?;
    }
    let meta = CheckpointMeta {
        method: arl.method,
        dataset: name.into(),
        image_shape: data.image_shape().to_vec(),
        k_t: data.k_t,
        k_p: data.k_p,
        arl,
        attack,
        utility: outcome.report.utility,
        privacy: outcome.report.privacy,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(ck.join(META_NAME), json + "\n")?;
    writeln!(out, "checkpoints in {}", ck.display())?;
    if let Some(r) = &outcome.reconstruction {
        dump_samples(&samples_dir(cfg, meta.method), &r.samples, out)?;
    }
    if let Some(b) = outcome.report.bounds {
        writeln!(
            out,
            "bounds: utility upper {:.2}, privacy lower {:.2}",
            b.utility_upper, b.privacy_lower
        )?;
    }
    write_reports(cfg, std::slice::from_ref(&outcome.report))?;
    print_row(out, &outcome.report)
}

fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let text = fs::read_to_string(dir.join(META_NAME))?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", dir.join(META_NAME).display())))
}

fn load_obfuscator(dir: &Path, meta: &CheckpointMeta) -> Result<Obfuscator<f32>> {
    let encoder = if meta.method.uses_encoder() {
        Some(Checkpoint::read(dir.join(ENCODER_FILE))?.to_unet::<f32>()?)
    } else {
        None
    };
    let filter = if meta.method.uses_filter() {
        let s = &meta.image_shape;
        Some(crate::spectral::FilterSpec::low_pass(meta.arl.radius, (s[1], s[2]))?)
    } else {
        None
    };
    Obfuscator::new(meta.method.mode(meta.arl.noise_variance), encoder, filter)
}

fn attack(cfg: &RunConfig, dir: &Path, kind: AttackArg, out: &mut dyn Write) -> Result<()> {
    let meta = read_meta(dir)?;
    let obfuscator = load_obfuscator(dir, &meta)?;
    let data = load_data(cfg)?;
    if data.image_shape() != meta.image_shape.as_slice() || data.k_p != meta.k_p {
        return Err(Error::Config(format!(
            "checkpoint was trained on {:?} images with {} private classes, dataset has {:?} and {}",
            meta.image_shape,
            meta.k_p,
            data.image_shape(),
            data.k_p
        )));
    }
    let budget = RunConfig {
        arl: meta.arl.clone(),
        ..cfg.clone()
    }
    .attack_config();
    let split = ObfuscatedSplit::new(&obfuscator, &data, cfg.seed)?;
    let config = serde_json::json!({ "arl": meta.arl, "attack": budget, "attack_kind": format!("{kind:?}").to_lowercase() });
    let radius = meta.method.uses_filter().then_some(meta.arl.radius);
    let row = match kind {
        AttackArg::Leakage => {
            let r = leakage_attack(&split, data.k_p, &budget, cfg.seed)?;
            ExperimentReport::new(meta.method.name(), &meta.dataset, meta.utility, r.privacy, cfg.seed)?
        }
        AttackArg::Reconstruction => {
            let r = reconstruction_attack(&split, &data, &budget, cfg.seed)?;
            dump_samples(&samples_dir(cfg, meta.method), &r.samples, out)?;
            ExperimentReport::new(meta.method.name(), &meta.dataset, meta.utility, meta.privacy, cfg.seed)?
                .with_similarity(r.similarity)
        }
    }
    .with_radius(radius)
    .with_config(config);
    write_reports(cfg, std::slice::from_ref(&row))?;
    print_row(out, &row)
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")?;
    f.flush()?;
    Ok(())
}

fn sweep(cfg: &RunConfig, radii: &[f64], force: bool, out: &mut dyn Write) -> Result<()> {
    if !cfg.arl.method.uses_filter() {
        return Err(Error::Config(format!(
            "method {} has no low-pass filter to sweep; use learned or lp_only",
            cfg.arl.method
        )));
    }
    let radii = dedup_radii(radii)?;
    let dir = cfg.output.dir.join("sweep");
    if dir.exists() {
        if !force {
            return refuse_overwrite(&dir, "a sweep");
        }
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let curves = ["utility", "privacy", "delta"];
    for c in curves {
        append_line(&dir.join(format!("{c}.dat")), &format!("# r {c}"))?;
    }
    let data = load_data(cfg)?;
    let attack = cfg.attack_config();
    writeln!(out, "sweeping {} over radii {radii:?}", cfg.arl.method)?;
    radius_sweep(&cfg.arl, &radii, &attack, &data, dataset_name(cfg), |row| {
        append_csv(dir.join("sweep.csv"), std::slice::from_ref(row))?;
        let r = row.r.unwrap_or(f64::NAN);
        for (c, v) in curves.iter().zip([row.utility, row.privacy, row.delta]) {
            append_line(&dir.join(format!("{c}.dat")), &format!("{r} {v}"))?;
        }
        write_reports(cfg, std::slice::from_ref(row))?;
        print_row(out, row)
    })?;
    writeln!(out, "sweep written to {}", dir.display())?;
    Ok(())
}

fn report(dir: &Path, out: &mut dyn Write) -> Result<()> {
    let path = dir.join(REPORTS_JSONL);
    if !path.exists() {
        return Err(Error::Config(format!("no report store at {}", path.display())));
    }
    let rows = read_jsonl(&path)?;
    if rows.is_empty() {
        return Err(Error::Config(format!("report store {} is empty", path.display())));
    }
    out.write_all(format_table(&rows).as_bytes())?;
    Ok(())
}
