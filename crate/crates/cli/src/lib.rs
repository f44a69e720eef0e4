//! Batch experiment driver for `neurochan-core`.
//!
//! A run reads a JSON config (a file path or the name of a bundled
//! example), dispatches on its `kind`, and writes CSV/JSON/SVG artifacts to
//! an output directory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod svg;

use std::path::{Path, PathBuf};

pub use error::{CliError, Result};
pub use experiments::RunOutcome;

/// A config shipped with the binary.
pub struct Bundled {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

macro_rules! bundled {
    ($name:literal, $desc:literal) => {
        Bundled {
            name: $name,
            description: $desc,
            text: include_str!(concat!("../configs/", $name, ".json")),
        }
    };
}

pub const BUNDLED: &[Bundled] = &[
    bundled!(
        "example1_classify",
        "controllability of every channel subset of the 2-state, 3-channel plant"
    ),
    bundled!(
        "example2_design",
        "spectra of the reference resilient gain on each channel pair"
    ),
    bundled!(
        "example2_second_gain",
        "spectra of a second reference gain, unstable with all channels on"
    ),
    bundled!(
        "example2_problem_b",
        "solve for a gain placing {-1,-1} on all three channel pairs"
    ),
    bundled!(
        "example3_certify",
        "superset certificate for the channel-2 invariant lift, alpha = 2"
    ),
    bundled!(
        "example3_intermittency",
        "Markov channel dropouts, delta = epsilon = 3, 100 seeded runs"
    ),
    bundled!(
        "example4_emulate",
        "binary-input emulation of a Hurwitz flow with cell map"
    ),
    bundled!(
        "channel_noise",
        "steady-state error under channel noise and channel augmentation"
    ),
    bundled!(
        "frames_circle",
        "circle frames m = 3, 4, 360 and jittered variants"
    ),
    bundled!("frames_sphere", "parametrically regular sphere frames"),
];

pub fn find_bundled(name: &str) -> Option<&'static Bundled> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED.iter().find(|b| b.name == name)
}

/// A parsed config plus where it came from.
pub struct Loaded {
    pub config: config::ExperimentConfig,
    /// Directory for resolving relative paths inside the config.
    pub base_dir: PathBuf,
    /// Name used for the default output directory.
    pub name: String,
}

/// Reads `arg` as a file if it exists, otherwise as a bundled example name.
pub fn load(arg: &str) -> Result<Loaded> {
    let path = Path::new(arg);
    let (text, base_dir, stem) = if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config: cannot read {arg}: {e}")))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        (text, base, stem)
    } else if let Some(b) = find_bundled(arg) {
        (b.text.to_string(), PathBuf::from("."), b.name.to_string())
    } else {
        return Err(CliError::Validation(format!(
            "config: {arg} is neither a file nor a bundled example (see `neurochan list-examples`)"
        )));
    };
    let config = config::parse(&text)?;
    let name = config.name.clone().unwrap_or(stem);
    Ok(Loaded {
        config,
        base_dir,
        name,
    })
}

/// Command-line settings that override the config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub expect_pass: bool,
}

/// Result of [`execute`].
#[derive(Debug)]
pub struct Execution {
    pub out_dir: PathBuf,
    pub written: Vec<PathBuf>,
    pub outcome: RunOutcome,
}

/// Loads, runs and writes one experiment.
pub fn execute(arg: &str, overrides: &Overrides) -> Result<Execution> {
    let loaded = load(arg)?;
    let seed = overrides.seed.or(loaded.config.seed);
    let ctx = experiments::Context {
        base_dir: &loaded.base_dir,
        seed,
    };
    let outcome = experiments::run(&loaded.config.experiment, &ctx)?;
    let out_dir = overrides
        .out
        .clone()
        .or_else(|| loaded.config.out.clone())
        .unwrap_or_else(|| PathBuf::from("neurochan-out").join(&loaded.name));
    let written = outcome
        .artifacts
        .iter()
        .map(|a| output::write_atomic(&out_dir, a))
        .collect::<Result<Vec<_>>>()?;
    if overrides.expect_pass && outcome.certificate_pass == Some(false) {
        return Err(CliError::Numerical(format!(
            "certificate failed; details in {}",
            out_dir.join("certificate.csv").display()
        )));
    }
    Ok(Execution {
        out_dir,
        written,
        outcome,
    })
}

/// Applies `NEUROCHAN_THREADS` to the global rayon pool.
pub fn configure_threads(value: Option<&str>) -> Result<()> {
    let Some(v) = value else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Validation(format!(
            "NEUROCHAN_THREADS: expected a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("NEUROCHAN_THREADS: {e}")))
}
