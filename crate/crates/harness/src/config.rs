//! Flat key=value experiment configuration.
//!
//! Resolution order: built-in defaults, then an optional config file, then
//! `--set key=value` overrides; the last assignment wins. Every key is
//! listed in [`KEY_HELP`]. Domains are declared as
//! `domain.<id> = family,magnitude,seed`; the first user-supplied domain
//! replaces the default benchmark, later ones accumulate (reassigning an id
//! overwrites it).

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use ssdg_core::data::{DomainSpec, ShiftFamily};
use ssdg_core::train::TrainConfig;
use ssdg_core::{Error, Result};

use crate::experiment::Method;

/// One benchmark domain before expansion into a full [`DomainSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDef {
    pub id: String,
    pub family: ShiftFamily,
    pub magnitude: f64,
    pub seed: u64,
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    /// Examples generated per class per domain.
    pub examples_per_class: usize,
    pub feature_dim: usize,
    /// Labelled examples kept per class per source domain.
    pub labels_per_class: usize,
    /// Fraction of each source domain used for training (rest validates).
    pub train_fraction: f64,
    pub domains: Vec<DomainDef>,
    pub target: String,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig {
            num_classes: 7,
            ..TrainConfig::default()
        };
        Self {
            train,
            examples_per_class: 40,
            feature_dim: 2,
            labels_per_class: 10,
            train_fraction: 0.9,
            domains: vec![
                DomainDef {
                    id: "style".into(),
                    family: ShiftFamily::Style,
                    magnitude: 0.5,
                    seed: 11,
                },
                DomainDef {
                    id: "background".into(),
                    family: ShiftFamily::Background,
                    magnitude: 1.5,
                    seed: 12,
                },
                DomainDef {
                    id: "corruption".into(),
                    family: ShiftFamily::Corruption,
                    magnitude: 0.8,
                    seed: 13,
                },
                DomainDef {
                    id: "texture".into(),
                    family: ShiftFamily::Texture,
                    magnitude: 0.4,
                    seed: 14,
                },
            ],
            target: "style".into(),
            method: Method::Uplm,
            seeds: vec![1, 2, 3],
            output_dir: default_output_root(),
        }
    }
}

/// `SSDG_OUTPUT_ROOT` when set, `./runs` otherwise.
pub fn default_output_root() -> PathBuf {
    env::var_os("SSDG_OUTPUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

impl ExperimentConfig {
    /// Expand the domain definitions with the shared generation settings.
    pub fn benchmark(&self) -> Vec<DomainSpec> {
        self.domains
            .iter()
            .map(|d| DomainSpec {
                domain_id: d.id.clone(),
                num_classes: self.train.num_classes,
                examples_per_class: self.examples_per_class,
                feature_dim: self.feature_dim,
                shift_family: d.family,
                shift_magnitude: d.magnitude,
                seed: d.seed,
            })
            .collect()
    }

    /// Static checks; returns warnings for legal but unusual settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.train.validate()?;
        if self.domains.is_empty() {
            return Err(Error::invalid("domains", "benchmark has no domains"));
        }
        for (i, d) in self.domains.iter().enumerate() {
            if self.domains[..i].iter().any(|e| e.id == d.id) {
                return Err(Error::invalid(
                    "domains",
                    format!("duplicate domain id {:?}", d.id),
                ));
            }
        }
        if !self.domains.iter().any(|d| d.id == self.target) {
            return Err(Error::invalid(
                "target",
                format!("domain {:?} is not part of the benchmark", self.target),
            ));
        }
        if self.domains.len() < 2 {
            return Err(Error::invalid(
                "domains",
                "need the target plus at least one source domain",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "need at least one trial seed"));
        }
        if self.labels_per_class == 0 {
            return Err(Error::invalid("labels_per_class", "must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(
                "train_fraction",
                "must lie strictly between 0 and 1",
            ));
        }
        if self.feature_dim < 2 {
            return Err(Error::invalid("feature_dim", "need at least 2 features"));
        }
        if self.examples_per_class == 0 {
            return Err(Error::invalid("examples_per_class", "must be positive"));
        }
        let mut warnings = Vec::new();
        if self.domains.len() == 2 {
            warnings.push("only one source domain remains after the holdout".into());
        }
        let expected_train =
            (self.examples_per_class as f64 * self.train_fraction).round() as usize;
        if self.labels_per_class > expected_train {
            warnings.push(format!(
                "labels_per_class {} likely exceeds the ~{} training examples per class",
                self.labels_per_class, expected_train
            ));
        }
        Ok(warnings)
    }

    /// Full resolved key set in canonical order. Feeding the pairs back
    /// through [`ConfigBuilder::set_pair`] reproduces the config exactly.
    pub fn to_flat(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let join_usize = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut pairs: Vec<(String, String)> = vec![
            ("num_classes".into(), t.num_classes.to_string()),
            ("hidden_dims".into(), join_usize(&t.hidden_dims)),
            ("dropout_rate".into(), t.dropout_rate.to_string()),
            ("tau".into(), t.tau.to_string()),
            ("eta".into(), t.eta.to_string()),
            ("lambda".into(), t.lambda.to_string()),
            ("batch_size".into(), t.batch_size.to_string()),
            ("mu".into(), t.mu.to_string()),
            ("lr".into(), t.lr.to_string()),
            ("momentum".into(), t.momentum.to_string()),
            ("epochs".into(), t.epochs.to_string()),
            (
                "iterations_per_epoch".into(),
                t.iterations_per_epoch.to_string(),
            ),
            ("mc_passes".into(), t.mc_passes.to_string()),
            ("ema_decay".into(), t.ema_decay.to_string()),
            ("ma_alpha".into(), t.ma_weights.alpha.to_string()),
            ("ma_beta".into(), t.ma_weights.beta.to_string()),
            ("ma_gamma".into(), t.ma_weights.gamma.to_string()),
            (
                "weak_noise_sigma".into(),
                t.augment.weak_noise_sigma.to_string(),
            ),
            (
                "strong_noise_sigma".into(),
                t.augment.strong_noise_sigma.to_string(),
            ),
            (
                "strong_mask_count".into(),
                t.augment.strong_mask_count.to_string(),
            ),
            ("ece_bins".into(), t.ece_bins.to_string()),
            ("examples_per_class".into(), self.examples_per_class.to_string()),
            ("feature_dim".into(), self.feature_dim.to_string()),
            ("labels_per_class".into(), self.labels_per_class.to_string()),
            ("train_fraction".into(), self.train_fraction.to_string()),
            ("target".into(), self.target.clone()),
            ("method".into(), self.method.label().into()),
            (
                "seeds".into(),
                self.seeds
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "output_dir".into(),
                self.output_dir.display().to_string(),
            ),
        ];
        for d in &self.domains {
            pairs.push((
                format!("domain.{}", d.id),
                format!("{},{},{}", d.family.label(), d.magnitude, d.seed),
            ));
        }
        pairs
    }
}

/// Every recognized key with its meaning, for `--help` and the README.
pub const KEY_HELP: &[(&str, &str)] = &[
    ("num_classes", "classes per domain (>= 2)"),
    ("hidden_dims", "comma-separated hidden layer widths; empty for none"),
    ("dropout_rate", "dropout probability before the classifier, [0, 1)"),
    ("tau", "confidence threshold, (0, 1]"),
    ("eta", "certainty threshold, (0, 1]"),
    ("lambda", "unsupervised loss weight, >= 0"),
    ("batch_size", "labelled examples per iteration"),
    ("mu", "unlabelled batch = mu x batch_size"),
    ("lr", "SGD learning rate"),
    ("momentum", "Nesterov momentum, [0, 1)"),
    ("epochs", "training epochs"),
    ("iterations_per_epoch", "optimizer steps per epoch"),
    ("mc_passes", "stochastic forward passes per gate decision"),
    ("ema_decay", "EMA decay per optimizer step, [0, 1]"),
    ("ma_alpha", "averaging weight on the best checkpoint"),
    ("ma_beta", "averaging weight on the last checkpoint"),
    ("ma_gamma", "averaging weight on the EMA checkpoint"),
    ("weak_noise_sigma", "weak view noise scale"),
    ("strong_noise_sigma", "strong view noise scale (>= weak)"),
    ("strong_mask_count", "coordinates zeroed in the strong view"),
    ("ece_bins", "equal-width calibration bins"),
    ("examples_per_class", "generated examples per class per domain"),
    ("feature_dim", "feature dimension (>= 2)"),
    ("labels_per_class", "labelled examples kept per class per source"),
    ("train_fraction", "per-domain training fraction, (0, 1)"),
    ("target", "held-out domain id"),
    ("method", "fixmatch | upl | ma | uplm"),
    ("seeds", "comma-separated trial seeds"),
    ("output_dir", "report root (SSDG_OUTPUT_ROOT when unset)"),
    (
        "domain.<id>",
        "family,magnitude,seed with family in style|background|corruption|texture",
    ),
];

/// Accumulates defaults, file assignments, and overrides.
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    cfg: ExperimentConfig,
    custom_domains: bool,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        Self::new()
    }
}

fn bad_key(context: &str, key: &str, message: impl std::fmt::Display) -> Error {
    Error::invalid("config", format!("{context}: key {key:?}: {message}"))
}

fn parse_scalar<T: std::str::FromStr>(context: &str, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| bad_key(context, key, format_args!("{e} (got {value:?})")))
}

fn parse_list<T: std::str::FromStr>(context: &str, key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|part| parse_scalar(context, key, part))
        .collect()
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self {
            cfg: ExperimentConfig::default(),
            custom_domains: false,
        }
    }

    /// Apply every assignment in a config file, top to bottom. Lines that
    /// are blank or start with `#` are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        let shown = path.display().to_string();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedRow {
                path: shown.clone(),
                line: idx + 1,
                message: "expected key = value".into(),
            })?;
            self.set_pair(key.trim(), value.trim(), &format!("{shown}:{}", idx + 1))?;
        }
        Ok(())
    }

    /// Apply one `key=value` override (the CLI `--set` form).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::invalid("config", format!("--set needs key=value, got {assignment:?}"))
        })?;
        self.set_pair(key.trim(), value.trim(), "--set")
    }

    /// Assign one key. `context` names the source for error messages.
    pub fn set_pair(&mut self, key: &str, value: &str, context: &str) -> Result<()> {
        if let Some(id) = key.strip_prefix("domain.") {
            return self.set_domain(id, value, context);
        }
        let t = &mut self.cfg.train;
        match key {
            "num_classes" => t.num_classes = parse_scalar(context, key, value)?,
            "hidden_dims" => t.hidden_dims = parse_list(context, key, value)?,
            "dropout_rate" => t.dropout_rate = parse_scalar(context, key, value)?,
            "tau" => t.tau = parse_scalar(context, key, value)?,
            "eta" => t.eta = parse_scalar(context, key, value)?,
            "lambda" => t.lambda = parse_scalar(context, key, value)?,
            "batch_size" => t.batch_size = parse_scalar(context, key, value)?,
            "mu" => t.mu = parse_scalar(context, key, value)?,
            "lr" => t.lr = parse_scalar(context, key, value)?,
            "momentum" => t.momentum = parse_scalar(context, key, value)?,
            "epochs" => t.epochs = parse_scalar(context, key, value)?,
            "iterations_per_epoch" => t.iterations_per_epoch = parse_scalar(context, key, value)?,
            "mc_passes" => t.mc_passes = parse_scalar(context, key, value)?,
            "ema_decay" => t.ema_decay = parse_scalar(context, key, value)?,
            "ma_alpha" => t.ma_weights.alpha = parse_scalar(context, key, value)?,
            "ma_beta" => t.ma_weights.beta = parse_scalar(context, key, value)?,
            "ma_gamma" => t.ma_weights.gamma = parse_scalar(context, key, value)?,
            "weak_noise_sigma" => t.augment.weak_noise_sigma = parse_scalar(context, key, value)?,
            "strong_noise_sigma" => {
                t.augment.strong_noise_sigma = parse_scalar(context, key, value)?
            }
            "strong_mask_count" => t.augment.strong_mask_count = parse_scalar(context, key, value)?,
            "ece_bins" => t.ece_bins = parse_scalar(context, key, value)?,
            "examples_per_class" => {
                self.cfg.examples_per_class = parse_scalar(context, key, value)?
            }
            "feature_dim" => self.cfg.feature_dim = parse_scalar(context, key, value)?,
            "labels_per_class" => self.cfg.labels_per_class = parse_scalar(context, key, value)?,
            "train_fraction" => self.cfg.train_fraction = parse_scalar(context, key, value)?,
            "target" => self.cfg.target = value.trim().to_string(),
            "method" => {
                self.cfg.method =
                    Method::parse(value.trim()).map_err(|e| bad_key(context, key, e))?
            }
            "seeds" => {
                self.cfg.seeds = parse_list(context, key, value)?;
            }
            "output_dir" => self.cfg.output_dir = PathBuf::from(value.trim()),
            other => {
                return Err(bad_key(
                    context,
                    other,
                    "unknown key (see the configuration key list)",
                ))
            }
        }
        Ok(())
    }

    fn set_domain(&mut self, id: &str, value: &str, context: &str) -> Result<()> {
        if id.is_empty() {
            return Err(bad_key(context, "domain.", "domain id is empty"));
        }
        let parts: Vec<&str> = value.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad_key(
                context,
                &format!("domain.{id}"),
                format!("expected family,magnitude,seed; got {value:?}"),
            ));
        }
        let family = ShiftFamily::parse(parts[0])
            .map_err(|e| bad_key(context, &format!("domain.{id}"), e))?;
        let magnitude: f64 = parse_scalar(context, &format!("domain.{id}"), parts[1])?;
        let seed: u64 = parse_scalar(context, &format!("domain.{id}"), parts[2])?;

        // The first user-defined domain replaces the default benchmark.
        if !self.custom_domains {
            self.cfg.domains.clear();
            self.custom_domains = true;
        }
        let def = DomainDef {
            id: id.to_string(),
            family,
            magnitude,
            seed,
        };
        if let Some(existing) = self.cfg.domains.iter_mut().find(|d| d.id == id) {
            *existing = def;
        } else {
            self.cfg.domains.push(def);
        }
        Ok(())
    }

    /// Validate and hand out the resolved config plus any warnings.
    pub fn finish(self) -> Result<(ExperimentConfig, Vec<String>)> {
        let warnings = self.cfg.validate()?;
        Ok((self.cfg, warnings))
    }

    /// Rebuild a config from flat pairs (the manifest replay path).
    pub fn from_pairs<'a, I>(pairs: I) -> Result<(ExperimentConfig, Vec<String>)>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut builder = ConfigBuilder::new();
        for (key, value) in pairs {
            builder.set_pair(key, value, "manifest")?;
        }
        builder.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_cleanly() {
        let (cfg, warnings) = ConfigBuilder::new().finish().unwrap();
        assert!(warnings.is_empty());
        assert_eq!(cfg.domains.len(), 4);
        assert_eq!(cfg.benchmark().len(), 4);
        assert_eq!(cfg.benchmark()[0].num_classes, 7);
        assert_eq!(cfg.method, Method::Uplm);
    }

    #[test]
    fn overrides_follow_last_writer_wins() {
        let mut b = ConfigBuilder::new();
        b.set("tau=0.9").unwrap();
        b.set("tau=0.8").unwrap();
        b.set("hidden_dims=32,16").unwrap();
        b.set("seeds=5,6").unwrap();
        b.set("method=fixmatch").unwrap();
        let (cfg, _) = b.finish().unwrap();
        assert_eq!(cfg.train.tau, 0.8);
        assert_eq!(cfg.train.hidden_dims, vec![32, 16]);
        assert_eq!(cfg.seeds, vec![5, 6]);
        assert_eq!(cfg.method, Method::FixMatch);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut b = ConfigBuilder::new();
        assert!(b.set("taus=0.9").is_err());
        assert!(b.set("tau=big").is_err());
        assert!(b.set("no_equals_sign").is_err());
        assert!(b.set("domain.x=style,0.5").is_err());
        assert!(b.set("domain.x=blur,0.5,1").is_err());
    }

    #[test]
    fn first_domain_assignment_replaces_the_default_benchmark() {
        let mut b = ConfigBuilder::new();
        b.set("domain.a=style,0.2,1").unwrap();
        b.set("domain.b=texture,0.3,2").unwrap();
        b.set("domain.a=style,0.25,1").unwrap();
        b.set("target=a").unwrap();
        let (cfg, _) = b.finish().unwrap();
        assert_eq!(cfg.domains.len(), 2);
        assert_eq!(cfg.domains[0].magnitude, 0.25);
    }

    #[test]
    fn flat_round_trip_reproduces_the_config() {
        let mut b = ConfigBuilder::new();
        b.set("tau=0.875").unwrap();
        b.set("lambda=0.5").unwrap();
        b.set("seeds=9").unwrap();
        b.set("domain.only=corruption,2.5,77").unwrap();
        b.set("domain.other=style,0.1,78").unwrap();
        b.set("target=only").unwrap();
        let (cfg, _) = b.finish().unwrap();

        let flat = cfg.to_flat();
        let pairs: Vec<(&str, &str)> =
            flat.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let (back, _) = ConfigBuilder::from_pairs(pairs).unwrap();

        assert_eq!(back.train.tau, cfg.train.tau);
        assert_eq!(back.train.lambda, cfg.train.lambda);
        assert_eq!(back.train.ma_weights.alpha, cfg.train.ma_weights.alpha);
        assert_eq!(back.seeds, cfg.seeds);
        assert_eq!(back.domains, cfg.domains);
        assert_eq!(back.target, cfg.target);
        assert_eq!(back.to_flat(), flat);
    }

    #[test]
    fn config_file_assignments_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        std::fs::write(
            &path,
            "# comment\n\ntau = 0.85\nmethod = ma\nseeds = 4,5,6\n",
        )
        .unwrap();
        let mut b = ConfigBuilder::new();
        b.apply_file(&path).unwrap();
        b.set("tau=0.8").unwrap();
        let (cfg, _) = b.finish().unwrap();
        assert_eq!(cfg.train.tau, 0.8);
        assert_eq!(cfg.method, Method::Ma);
        assert_eq!(cfg.seeds, vec![4, 5, 6]);

        std::fs::write(&path, "tau 0.85\n").unwrap();
        let err = ConfigBuilder::new().apply_file(&path).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn target_must_be_a_benchmark_member() {
        let mut b = ConfigBuilder::new();
        b.set("target=missing").unwrap();
        assert!(b.finish().is_err());
    }
}
