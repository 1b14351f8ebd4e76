//! Experiment configuration: a flat `key = value` text format resolved
//! into a fully validated run description.
//!
//! Grammar: one `key = value` pair per line; blank lines and lines
//! starting with `#` are ignored; keys use dotted section prefixes
//! (`space.kind`, `window.radius`, ...). No nesting, no quoting.
//! Intensity grids are either comma lists (`0.2,0.4,0.6`) or ranges
//! (`start:stop:step`, endpoint included).
//!
//! Resolution applies defaults, checks every constraint that does not
//! require sampling, and records the complete effective configuration as
//! sorted `key = value` lines, so `validate` can echo exactly what `run`
//! would execute. Both subcommands share this code path, which is what
//! makes their diagnostics identical.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::clusters::SpanningBands;
use crate::error::{Error, Result};
use crate::estimators::SweepPlan;
use crate::geometry::{Space, SpaceKind, Window};
use crate::pointprocess::fmt_f64;

/// The experiment a config file requests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Sample,
    Clusters,
    CrossingSweep,
    LambdaC,
    BbSweep,
    LambdaBb,
    Stability,
    ASets,
    HtimesrMultiplicity,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::Clusters => "clusters",
            ExperimentKind::CrossingSweep => "crossing-sweep",
            ExperimentKind::LambdaC => "lambda-c",
            ExperimentKind::BbSweep => "bb-sweep",
            ExperimentKind::LambdaBb => "lambda-bb",
            ExperimentKind::Stability => "stability",
            ExperimentKind::ASets => "a-sets",
            ExperimentKind::HtimesrMultiplicity => "htimesr-multiplicity",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sample" => ExperimentKind::Sample,
            "clusters" => ExperimentKind::Clusters,
            "crossing-sweep" => ExperimentKind::CrossingSweep,
            "lambda-c" => ExperimentKind::LambdaC,
            "bb-sweep" => ExperimentKind::BbSweep,
            "lambda-bb" => ExperimentKind::LambdaBb,
            "stability" => ExperimentKind::Stability,
            "a-sets" => ExperimentKind::ASets,
            "htimesr-multiplicity" => ExperimentKind::HtimesrMultiplicity,
            _ => return None,
        })
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

/// Experiment-specific parameters, fully validated.
#[derive(Clone, Debug)]
pub enum Payload {
    Sample,
    Clusters {
        lambda: f64,
        bands: Option<SpanningBands>,
    },
    CrossingSweep {
        grid: Vec<f64>,
        trials: usize,
        common_random_numbers: bool,
        bands: SpanningBands,
    },
    LambdaC {
        grid: Vec<f64>,
        trials: usize,
        common_random_numbers: bool,
        bands: SpanningBands,
        threshold: f64,
    },
    BbSweep {
        grid: Vec<f64>,
        trials: usize,
        common_random_numbers: bool,
        region_radius: f64,
        separations: Vec<f64>,
    },
    LambdaBb {
        grid: Vec<f64>,
        trials: usize,
        common_random_numbers: bool,
        region_radius: f64,
        separations: Vec<f64>,
        target: f64,
    },
    Stability {
        lambda1: f64,
        lambda2: f64,
        bands: SpanningBands,
        trials: usize,
    },
    ASets {
        lambda: f64,
        lambda_star: f64,
        r: f64,
        n: usize,
        z_axis: f64,
        bands: SpanningBands,
        trials: usize,
    },
    Multiplicity {
        grid: Vec<f64>,
        trials: usize,
        common_random_numbers: bool,
        bands: SpanningBands,
    },
}

/// A fully resolved, validated run description.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub space: Space,
    pub window: Window,
    pub lambda_max: f64,
    pub seed: u64,
    /// 0 means "use the machine default".
    pub threads: usize,
    pub output_dir: PathBuf,
    pub payload: Payload,
    /// The complete effective configuration, sorted by key.
    pub resolved: Vec<(String, String)>,
}

impl RunConfig {
    /// Sorted `key = value` lines of the effective configuration.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// The sweep plan for grid-based payloads.
    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        let (grid, trials, crn) = match &self.payload {
            Payload::CrossingSweep {
                grid,
                trials,
                common_random_numbers,
                ..
            }
            | Payload::LambdaC {
                grid,
                trials,
                common_random_numbers,
                ..
            }
            | Payload::BbSweep {
                grid,
                trials,
                common_random_numbers,
                ..
            }
            | Payload::LambdaBb {
                grid,
                trials,
                common_random_numbers,
                ..
            }
            | Payload::Multiplicity {
                grid,
                trials,
                common_random_numbers,
                ..
            } => (grid.clone(), *trials, *common_random_numbers),
            _ => {
                return Err(Error::InternalInvariant(
                    "sweep_plan called on a non-sweep experiment".into(),
                ))
            }
        };
        SweepPlan::new(
            self.space,
            self.window.clone(),
            grid,
            self.lambda_max,
            trials,
            self.seed,
            crn,
        )
    }
}

struct Entry {
    line: usize,
    value: String,
    used: Cell<bool>,
}

/// Parsed key=value file with consumption tracking and a resolved-value
/// recorder.
struct Reader {
    entries: BTreeMap<String, Entry>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl Reader {
    fn parse(text: &str) -> Result<Reader> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(
                    lineno,
                    line,
                    "expected `key = value`",
                ));
            };
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if key.is_empty() {
                return Err(Error::config(lineno, "", "empty key"));
            }
            if let Some(prev) = entries.get(&key) {
                let Entry { line: first, .. } = prev;
                return Err(Error::config(
                    lineno,
                    key,
                    format!("duplicate key (first set on line {first})"),
                ));
            }
            entries.insert(
                key,
                Entry {
                    line: lineno,
                    value,
                    used: Cell::new(false),
                },
            );
        }
        Ok(Reader {
            entries,
            resolved: RefCell::new(BTreeMap::new()),
        })
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|e| e.line).unwrap_or(0)
    }

    fn record(&self, key: &str, value: impl Into<String>) {
        self.resolved
            .borrow_mut()
            .insert(key.to_string(), value.into());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| {
            e.used.set(true);
            e.value.as_str()
        })
    }

    fn require(&self, key: &str) -> Result<&str> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::config(0, key, "missing required key"))?;
        self.record(key, v);
        Ok(v)
    }

    fn optional(&self, key: &str, default: &str) -> String {
        let v = self.raw(key).unwrap_or(default).to_string();
        self.record(key, v.clone());
        v
    }

    fn require_f64(&self, key: &str) -> Result<f64> {
        parse_f64(self.require(key)?, self.line_of(key), key)
    }

    fn optional_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            Some(v) => {
                self.record(key, v);
                parse_f64(v, self.line_of(key), key)
            }
            None => {
                self.record(key, trim_float(default));
                Ok(default)
            }
        }
    }

    fn require_u64(&self, key: &str) -> Result<u64> {
        let v = self.require(key)?;
        v.parse::<u64>().map_err(|_| {
            Error::config(
                self.line_of(key),
                key,
                format!("expected a nonnegative integer, got `{v}`"),
            )
        })
    }

    fn optional_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            Some(v) => {
                self.record(key, v);
                v.parse::<usize>().map_err(|_| {
                    Error::config(
                        self.line_of(key),
                        key,
                        format!("expected a nonnegative integer, got `{v}`"),
                    )
                })
            }
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    fn require_usize(&self, key: &str) -> Result<usize> {
        let v = self.require(key)?;
        v.parse::<usize>().map_err(|_| {
            Error::config(
                self.line_of(key),
                key,
                format!("expected a nonnegative integer, got `{v}`"),
            )
        })
    }

    fn optional_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            Some(v) => {
                self.record(key, v);
                match v {
                    "true" => Ok(true),
                    "false" => Ok(false),
                    other => Err(Error::config(
                        self.line_of(key),
                        key,
                        format!("expected `true` or `false`, got `{other}`"),
                    )),
                }
            }
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    fn require_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.require(key)?;
        parse_f64_list(v, self.line_of(key), key)
    }

    /// Fails if any key in the file was never consumed.
    fn finish(&self) -> Result<Vec<(String, String)>> {
        for (key, entry) in &self.entries {
            if !entry.used.get() {
                return Err(Error::config(
                    entry.line,
                    key.clone(),
                    "unknown key for this experiment",
                ));
            }
        }
        Ok(self
            .resolved
            .borrow()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect())
    }
}

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::config(line, key, format!("expected a number, got `{v}`")))
}

/// Render a float default the way a user would have typed it.
fn trim_float(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

/// Comma list (`0.2,0.4`) or inclusive range (`start:stop:step`).
fn parse_f64_list(v: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    if v.contains(':') {
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(
                line,
                key,
                format!("range syntax is start:stop:step, got `{v}`"),
            ));
        }
        let start = parse_f64(parts[0].trim(), line, key)?;
        let stop = parse_f64(parts[1].trim(), line, key)?;
        let step = parse_f64(parts[2].trim(), line, key)?;
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::config(
                line,
                key,
                format!("range step must be positive, got `{step}`"),
            ));
        }
        if stop < start {
            return Err(Error::config(
                line,
                key,
                format!("range stop {stop} is below start {start}"),
            ));
        }
        let count = ((stop - start) / step + 0.5 * step.min(1.0) / step).floor() as usize;
        let mut out = Vec::with_capacity(count + 1);
        for i in 0..=count {
            let mut x = start + i as f64 * step;
            if x > stop + 1e-9 * step {
                break;
            }
            // An accumulated endpoint may overshoot the written stop by a
            // few ulps; snap it so `stop` compares equal downstream.
            if (x - stop).abs() <= 1e-9 * step {
                x = stop;
            }
            out.push(x);
        }
        Ok(out)
    } else {
        let mut out = Vec::new();
        for part in v.split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err(Error::config(line, key, "empty list entry"));
            }
            out.push(parse_f64(part, line, key)?);
        }
        Ok(out)
    }
}

/// Wrap a library-level validation failure as a config diagnostic on the
/// line where `key` was set (line 0 if it was defaulted).
fn at_key(reader: &Reader, key: &str, err: Error) -> Error {
    match err {
        Error::Config { .. } => err,
        other => Error::config(reader.line_of(key), key, other.to_string()),
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    resolve_config(&text, overrides)
}

/// Parse and fully validate a config, applying CLI overrides. All checks
/// that do not require sampling run here, so `validate` and `run` agree
/// exactly on what is acceptable.
pub fn resolve_config(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let reader = Reader::parse(text)?;

    let experiment_name = reader.require("experiment")?.to_string();
    let experiment = ExperimentKind::parse(&experiment_name).ok_or_else(|| {
        Error::config(
            reader.line_of("experiment"),
            "experiment",
            format!(
                "unknown experiment `{experiment_name}`; expected one of sample, clusters, \
                 crossing-sweep, lambda-c, bb-sweep, lambda-bb, stability, a-sets, \
                 htimesr-multiplicity"
            ),
        )
    })?;

    let space = resolve_space(&reader)?;
    let window = resolve_window(&reader, &space)?;

    let lambda_max = reader.require_f64("lambda.max")?;
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::config(
            reader.line_of("lambda.max"),
            "lambda.max",
            format!("must be positive and finite, got {lambda_max}"),
        ));
    }

    let seed = match overrides.seed {
        Some(s) => {
            // Still consume and validate the file's seed so overrides do
            // not mask a malformed config.
            reader.require_u64("seed")?;
            reader.record("seed", s.to_string());
            s
        }
        None => reader.require_u64("seed")?,
    };

    let threads = match overrides.threads {
        Some(t) => {
            reader.optional_usize("threads", 0)?;
            reader.record("threads", t.to_string());
            t
        }
        None => reader.optional_usize("threads", 0)?,
    };

    let output_dir = match &overrides.output_dir {
        Some(d) => {
            reader.optional("output.dir", "out");
            reader.record("output.dir", d.display().to_string());
            d.clone()
        }
        None => PathBuf::from(reader.optional("output.dir", "out")),
    };

    let payload = resolve_payload(&reader, experiment, &space, &window, lambda_max)?;

    let mut resolved = reader.finish()?;
    resolved.sort();

    Ok(RunConfig {
        experiment,
        space,
        window,
        lambda_max,
        seed,
        threads,
        output_dir,
        payload,
        resolved,
    })
}

fn resolve_space(reader: &Reader) -> Result<Space> {
    let kind = reader.require("space.kind")?.to_string();
    let ball_radius = reader.optional_f64("space.ball_radius", 1.0)?;
    let base = match kind.as_str() {
        "euclidean" => {
            let dim = reader.require_usize("space.dim")?;
            Space::euclidean(dim).map_err(|e| at_key(reader, "space.dim", e))?
        }
        "hyperbolic2" => Space::hyperbolic2(),
        "h2xr" => Space::h2xr(),
        other => {
            return Err(Error::config(
                reader.line_of("space.kind"),
                "space.kind",
                format!("unknown space `{other}`; expected euclidean, hyperbolic2, or h2xr"),
            ))
        }
    };
    base.with_ball_radius(ball_radius)
        .map_err(|e| at_key(reader, "space.ball_radius", e))
}

fn resolve_window(reader: &Reader, space: &Space) -> Result<Window> {
    let kind = reader.optional(
        "window.kind",
        if space.kind() == SpaceKind::H2xR {
            "cylinder"
        } else {
            "ball"
        },
    );
    let window = match kind.as_str() {
        "ball" => {
            let radius = reader.require_f64("window.radius")?;
            Window::ball(space.origin(), radius)
        }
        "cylinder" => {
            let h2_radius = reader.require_f64("window.h2_radius")?;
            let height_half = reader.require_f64("window.height_half")?;
            Window::cylinder(h2_radius, height_half)
        }
        other => {
            return Err(Error::config(
                reader.line_of("window.kind"),
                "window.kind",
                format!("unknown window kind `{other}`; expected ball or cylinder"),
            ))
        }
    };
    window
        .validate_sampling(space)
        .map_err(|e| at_key(reader, "window.kind", e))?;
    Ok(window)
}

fn resolve_bands(reader: &Reader) -> Result<SpanningBands> {
    let r_inner = reader.require_f64("bands.r_inner")?;
    let r_outer = reader.require_f64("bands.r_outer")?;
    let bands = SpanningBands { r_inner, r_outer };
    crate::estimators::validate_bands(bands).map_err(|e| at_key(reader, "bands.r_inner", e))?;
    Ok(bands)
}

fn resolve_grid(reader: &Reader, lambda_max: f64) -> Result<Vec<f64>> {
    let grid = reader.require_f64_list("lambda.grid")?;
    let key = "lambda.grid";
    let line = reader.line_of(key);
    if grid.is_empty() {
        return Err(Error::config(line, key, "grid must not be empty"));
    }
    for &g in &grid {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Error::config(
                line,
                key,
                format!("grid entries must be nonnegative and finite, got {g}"),
            ));
        }
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(line, key, "grid must be strictly ascending"));
    }
    if *grid.last().unwrap() > lambda_max {
        return Err(Error::config(
            line,
            key,
            format!(
                "grid entry {} exceeds lambda.max = {lambda_max}",
                grid.last().unwrap()
            ),
        ));
    }
    Ok(grid)
}

fn positive_trials(reader: &Reader) -> Result<usize> {
    let trials = reader.require_usize("trials")?;
    if trials == 0 {
        return Err(Error::config(
            reader.line_of("trials"),
            "trials",
            "must be at least 1",
        ));
    }
    Ok(trials)
}

fn resolve_payload(
    reader: &Reader,
    experiment: ExperimentKind,
    space: &Space,
    window: &Window,
    lambda_max: f64,
) -> Result<Payload> {
    // Sweep experiments must also pass the estimator-side window checks
    // here, so `validate` rejects exactly what `run` would.
    match experiment {
        ExperimentKind::Sample => Ok(Payload::Sample),
        ExperimentKind::Clusters => {
            let lambda = reader.require_f64("lambda.value")?;
            if !(0.0..=lambda_max).contains(&lambda) {
                return Err(Error::config(
                    reader.line_of("lambda.value"),
                    "lambda.value",
                    format!("must lie in [0, lambda.max = {lambda_max}], got {lambda}"),
                ));
            }
            let bands = if reader.entries.contains_key("bands.r_inner")
                || reader.entries.contains_key("bands.r_outer")
            {
                Some(resolve_bands(reader)?)
            } else {
                None
            };
            Ok(Payload::Clusters { lambda, bands })
        }
        ExperimentKind::CrossingSweep | ExperimentKind::LambdaC => {
            let grid = resolve_grid(reader, lambda_max)?;
            let trials = positive_trials(reader)?;
            let crn = reader.optional_bool("common_random_numbers", true)?;
            let bands = resolve_bands(reader)?;
            crate::estimators::validate_window_reach(
                space,
                window,
                bands.r_outer,
                bands.r_outer,
            )
            .map_err(|e| at_key(reader, "bands.r_outer", e))?;
            if experiment == ExperimentKind::CrossingSweep {
                Ok(Payload::CrossingSweep {
                    grid,
                    trials,
                    common_random_numbers: crn,
                    bands,
                })
            } else {
                let threshold = reader.optional_f64("threshold", 0.5)?;
                if !(threshold > 0.0 && threshold < 1.0) {
                    return Err(Error::config(
                        reader.line_of("threshold"),
                        "threshold",
                        format!("must lie strictly between 0 and 1, got {threshold}"),
                    ));
                }
                if grid.len() < 2 {
                    return Err(Error::config(
                        reader.line_of("lambda.grid"),
                        "lambda.grid",
                        "threshold bracketing needs at least two grid intensities",
                    ));
                }
                Ok(Payload::LambdaC {
                    grid,
                    trials,
                    common_random_numbers: crn,
                    bands,
                    threshold,
                })
            }
        }
        ExperimentKind::BbSweep | ExperimentKind::LambdaBb => {
            let grid = resolve_grid(reader, lambda_max)?;
            let trials = positive_trials(reader)?;
            let crn = reader.optional_bool("common_random_numbers", true)?;
            let region_radius = reader.require_f64("bb.region_radius")?;
            let separations = reader.require_f64_list("bb.separations")?;
            if separations.is_empty() {
                return Err(Error::config(
                    reader.line_of("bb.separations"),
                    "bb.separations",
                    "at least one separation is required",
                ));
            }
            let mut max_sep = 0.0f64;
            for &s in &separations {
                crate::estimators::validate_region_geometry(region_radius, s)
                    .map_err(|e| at_key(reader, "bb.separations", e))?;
                max_sep = max_sep.max(s);
            }
            crate::estimators::validate_window_reach(
                space,
                window,
                0.5 * max_sep + region_radius,
                region_radius,
            )
            .map_err(|e| at_key(reader, "bb.separations", e))?;
            if experiment == ExperimentKind::BbSweep {
                Ok(Payload::BbSweep {
                    grid,
                    trials,
                    common_random_numbers: crn,
                    region_radius,
                    separations,
                })
            } else {
                let target = reader.optional_f64("target", 0.99)?;
                if !(0.0..=1.0).contains(&target) {
                    return Err(Error::config(
                        reader.line_of("target"),
                        "target",
                        format!("must lie in [0, 1], got {target}"),
                    ));
                }
                Ok(Payload::LambdaBb {
                    grid,
                    trials,
                    common_random_numbers: crn,
                    region_radius,
                    separations,
                    target,
                })
            }
        }
        ExperimentKind::Stability => {
            let lambda1 = reader.require_f64("stability.lambda1")?;
            let lambda2 = reader.require_f64("stability.lambda2")?;
            if !(lambda1 >= 0.0 && lambda1 <= lambda2 && lambda2 <= lambda_max) {
                return Err(Error::config(
                    reader.line_of("stability.lambda1"),
                    "stability.lambda1",
                    format!(
                        "need 0 <= lambda1 <= lambda2 <= lambda.max, got {lambda1}, \
                         {lambda2}, {lambda_max}"
                    ),
                ));
            }
            let bands = resolve_bands(reader)?;
            crate::estimators::validate_window_reach(
                space,
                window,
                bands.r_outer,
                bands.r_outer,
            )
            .map_err(|e| at_key(reader, "bands.r_outer", e))?;
            let trials = positive_trials(reader)?;
            Ok(Payload::Stability {
                lambda1,
                lambda2,
                bands,
                trials,
            })
        }
        ExperimentKind::ASets => {
            let lambda = reader.require_f64("a_sets.lambda")?;
            let lambda_star = reader.require_f64("a_sets.lambda_star")?;
            if !(lambda >= 0.0 && lambda <= lambda_star && lambda_star <= lambda_max) {
                return Err(Error::config(
                    reader.line_of("a_sets.lambda"),
                    "a_sets.lambda",
                    format!(
                        "need 0 <= lambda <= lambda_star <= lambda.max, got {lambda}, \
                         {lambda_star}, {lambda_max}"
                    ),
                ));
            }
            let r = reader.require_f64("a_sets.r")?;
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::config(
                    reader.line_of("a_sets.r"),
                    "a_sets.r",
                    format!("must be positive and finite, got {r}"),
                ));
            }
            let n = reader.require_usize("a_sets.n")?;
            if n == 0 {
                return Err(Error::config(
                    reader.line_of("a_sets.n"),
                    "a_sets.n",
                    "chain budget must be at least 1",
                ));
            }
            let z_axis = reader.optional_f64("a_sets.z_axis", 0.0)?;
            if !z_axis.is_finite() {
                return Err(Error::config(
                    reader.line_of("a_sets.z_axis"),
                    "a_sets.z_axis",
                    format!("must be finite, got {z_axis}"),
                ));
            }
            let bands = resolve_bands(reader)?;
            let trials = positive_trials(reader)?;
            Ok(Payload::ASets {
                lambda,
                lambda_star,
                r,
                n,
                z_axis,
                bands,
                trials,
            })
        }
        ExperimentKind::HtimesrMultiplicity => {
            if space.kind() != SpaceKind::H2xR {
                return Err(Error::config(
                    reader.line_of("space.kind"),
                    "space.kind",
                    "htimesr-multiplicity runs on the product space (h2xr) only",
                ));
            }
            let grid = resolve_grid(reader, lambda_max)?;
            let trials = positive_trials(reader)?;
            let crn = reader.optional_bool("common_random_numbers", true)?;
            let bands = resolve_bands(reader)?;
            crate::estimators::validate_window_reach(
                space,
                window,
                bands.r_outer,
                bands.r_outer,
            )
            .map_err(|e| at_key(reader, "bands.r_outer", e))?;
            Ok(Payload::Multiplicity {
                grid,
                trials,
                common_random_numbers: crn,
                bands,
            })
        }
    }
}

/// Format a float for resolved-config echoes: full precision, stable.
pub fn echo_f64(x: f64) -> String {
    fmt_f64(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_sweep_cfg() -> String {
        "\
# crossing sweep on the plane
experiment = crossing-sweep
space.kind = euclidean
space.dim = 2
window.radius = 12.0
lambda.max = 1.0
lambda.grid = 0.2:1.0:0.2
trials = 10
seed = 7
bands.r_inner = 2.0
bands.r_outer = 10.0
"
        .to_string()
    }

    #[test]
    fn resolves_a_sweep_config_with_defaults() {
        let cfg = resolve_config(&base_sweep_cfg(), &Overrides::default()).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::CrossingSweep);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.threads, 0);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        match &cfg.payload {
            Payload::CrossingSweep {
                grid,
                trials,
                common_random_numbers,
                bands,
            } => {
                assert_eq!(grid.len(), 5);
                approx::assert_relative_eq!(grid[0], 0.2);
                approx::assert_relative_eq!(grid[4], 1.0);
                assert_eq!(*trials, 10);
                assert!(*common_random_numbers);
                assert_eq!(bands.r_outer, 10.0);
            }
            other => panic!("wrong payload: {other:?}"),
        }
        let echo = cfg.resolved_text();
        assert!(echo.contains("common_random_numbers = true"));
        assert!(echo.contains("output.dir = out"));
        // Echo is sorted.
        let keys: Vec<&str> = echo.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let cfg = base_sweep_cfg() + "seed = 8\n";
        match resolve_config(&cfg, &Overrides::default()) {
            Err(Error::Config { line, field, message }) => {
                assert_eq!(field, "seed");
                assert_eq!(line, 12);
                assert!(message.contains("first set on line 9"));
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_its_line() {
        let cfg = base_sweep_cfg() + "bogus.key = 3\n";
        match resolve_config(&cfg, &Overrides::default()) {
            Err(Error::Config { line, field, .. }) => {
                assert_eq!(field, "bogus.key");
                assert_eq!(line, 12);
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn non_ascending_grid_names_the_field() {
        let cfg = base_sweep_cfg().replace("0.2:1.0:0.2", "0.4,0.2");
        match resolve_config(&cfg, &Overrides::default()) {
            Err(Error::Config { field, message, .. }) => {
                assert_eq!(field, "lambda.grid");
                assert!(message.contains("ascending"));
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn grid_above_lambda_max_is_rejected() {
        let cfg = base_sweep_cfg().replace("lambda.max = 1.0", "lambda.max = 0.9");
        match resolve_config(&cfg, &Overrides::default()) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "lambda.grid"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn ball_window_on_product_space_names_cylinder_requirement() {
        let cfg = "\
experiment = sample
space.kind = h2xr
window.kind = ball
window.radius = 5.0
lambda.max = 1.0
seed = 1
";
        match resolve_config(cfg, &Overrides::default()) {
            Err(Error::Config { field, message, .. }) => {
                assert_eq!(field, "window.kind");
                assert!(message.contains("cylinder"), "message: {message}");
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn undersized_window_is_rejected_statically() {
        let cfg = base_sweep_cfg().replace("window.radius = 12.0", "window.radius = 10.5");
        match resolve_config(&cfg, &Overrides::default()) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "bands.r_outer"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn overrides_replace_file_values_in_the_echo() {
        let over = Overrides {
            output_dir: Some(PathBuf::from("/tmp/extra")),
            threads: Some(3),
            seed: Some(99),
        };
        let cfg = resolve_config(&base_sweep_cfg(), &over).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.threads, 3);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/extra"));
        let echo = cfg.resolved_text();
        assert!(echo.contains("seed = 99"));
        assert!(echo.contains("threads = 3"));
    }

    #[test]
    fn comma_grid_and_range_grid_agree() {
        let a = parse_f64_list("0.2,0.4,0.6,0.8,1.0", 1, "lambda.grid").unwrap();
        let b = parse_f64_list("0.2:1.0:0.2", 1, "lambda.grid").unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            approx::assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn range_endpoint_snaps_to_the_written_stop() {
        // 0.2 + 4 * 0.1 overshoots 0.6 by a few ulps; the parsed grid
        // must still compare equal to a lambda.max of exactly 0.6.
        let grid = parse_f64_list("0.2:0.6:0.1", 1, "lambda.grid").unwrap();
        assert_eq!(grid.len(), 5);
        assert_eq!(*grid.last().unwrap(), 0.6);
    }

    #[test]
    fn stability_config_resolves() {
        let cfg = "\
experiment = stability
space.kind = euclidean
space.dim = 2
window.radius = 34.0
lambda.max = 0.9
stability.lambda1 = 0.6
stability.lambda2 = 0.9
bands.r_inner = 2.0
bands.r_outer = 30.0
trials = 5
seed = 3
";
        let run = resolve_config(cfg, &Overrides::default()).unwrap();
        match run.payload {
            Payload::Stability { lambda1, lambda2, trials, .. } => {
                assert_eq!(lambda1, 0.6);
                assert_eq!(lambda2, 0.9);
                assert_eq!(trials, 5);
            }
            other => panic!("wrong payload: {other:?}"),
        }
    }

    #[test]
    fn multiplicity_requires_product_space() {
        let cfg = "\
experiment = htimesr-multiplicity
space.kind = euclidean
space.dim = 2
window.radius = 12.0
lambda.max = 1.0
lambda.grid = 0.5,0.6
trials = 2
seed = 1
bands.r_inner = 2.0
bands.r_outer = 10.0
";
        match resolve_config(cfg, &Overrides::default()) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "space.kind"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_required_key_is_reported() {
        let cfg = base_sweep_cfg().replace("trials = 10\n", "");
        match resolve_config(&cfg, &Overrides::default()) {
            Err(Error::Config { line, field, .. }) => {
                assert_eq!(line, 0);
                assert_eq!(field, "trials");
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }
}
