//! Scenario files: `key = value` lines grouped under `[section]` headers.
//! `#` starts a comment. Every key has a default; unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anisoflow::grid::{read_snapshot, DiscreteDomain, ScalarField, SnapshotField, VectorField};
use anisoflow::thermo::PressureLaw;
use anisoflow::visc::{lambda_threshold, ViscosityParams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    Uniform,
    Bump,
    CompactBump,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityKind {
    Zero,
    Swirl,
    CompactSwirl,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceKind {
    Zero,
    Uniform,
    Swirl,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    None,
    FarField,
    Initial,
}

macro_rules! keyword_enum {
    ($ty:ident { $($var:ident => $kw:literal),* $(,)? }) => {
        impl $ty {
            pub const KEYWORDS: &'static [&'static str] = &[$($kw),*];
            pub fn keyword(self) -> &'static str {
                match self { $($ty::$var => $kw),* }
            }
            fn parse(s: &str) -> Option<Self> {
                match s { $($kw => Some($ty::$var),)* _ => None }
            }
        }
    };
}

keyword_enum!(DensityKind { Uniform => "uniform", Bump => "bump", CompactBump => "compact_bump", File => "file" });
keyword_enum!(VelocityKind { Zero => "zero", Swirl => "swirl", CompactSwirl => "compact_swirl", File => "file" });
keyword_enum!(ForceKind { Zero => "zero", Uniform => "uniform", Swirl => "swirl", File => "file" });
keyword_enum!(PairKind { None => "none", FarField => "far_field", Initial => "initial" });

/// A fully resolved scenario. [`Scenario::load`] makes field file paths
/// relative to the scenario file absolute.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub extent: f64,
    pub cells: usize,

    pub mu: f64,
    pub delta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub rho_inf: f64,

    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    pub modes: usize,
    pub picard_theta: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub smoothing_passes: usize,

    pub density: DensityKind,
    pub density_amplitude: f64,
    pub density_width: f64,
    pub density_radius: f64,
    pub density_center: [f64; 3],
    pub density_file: String,
    pub velocity: VelocityKind,
    pub velocity_amplitude: f64,
    pub velocity_radius: f64,
    pub velocity_center: [f64; 3],
    pub velocity_file: String,

    pub force: ForceKind,
    pub force_amplitude: f64,
    pub force_direction: [f64; 3],
    pub force_file: String,

    pub defect_cells: usize,
    pub rei_pair: PairKind,
    pub budget_slack: f64,

    pub output_dir: String,
    pub snapshot_every: usize,

    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            extent: 1.0,
            cells: 16,
            mu: 1.0,
            delta: 0.5,
            lambda: 0.0,
            gamma: 1.4,
            rho_inf: 1.0,
            eps: 0.1,
            dt: 2e-3,
            t_end: 0.1,
            modes: 20,
            picard_theta: 0.7,
            picard_tol: 1e-9,
            picard_max: 200,
            smoothing_passes: 0,
            density: DensityKind::Uniform,
            density_amplitude: 0.5,
            density_width: 4.0,
            density_radius: 0.6,
            density_center: [0.0; 3],
            density_file: String::new(),
            velocity: VelocityKind::Zero,
            velocity_amplitude: 1.0,
            velocity_radius: 0.8,
            velocity_center: [0.0; 3],
            velocity_file: String::new(),
            force: ForceKind::Zero,
            force_amplitude: 1.0,
            force_direction: [0.0, 0.0, -1.0],
            force_file: String::new(),
            defect_cells: 4,
            rei_pair: PairKind::None,
            budget_slack: 10.0,
            output_dir: String::new(),
            snapshot_every: 0,
            seed: 0x5eed,
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Parsed {
    path: String,
    entries: BTreeMap<(String, String), Entry>,
}

impl Parsed {
    fn err(&self, line: usize, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config { path: self.path.clone(), line, key: key.into(), message: message.into() }
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        self.entries.get(&(section.into(), key.into())).map_or(0, |e| e.line)
    }

    fn take<T>(
        &mut self,
        section: &str,
        key: &str,
        slot: &mut T,
        parse: impl Fn(&str) -> Option<T>,
        expect: &str,
    ) -> CliResult<()> {
        if let Some(e) = self.entries.remove(&(section.to_string(), key.to_string())) {
            *slot = parse(&e.value)
                .ok_or_else(|| self.err(e.line, &format!("{section}.{key}"), format!("expected {expect}, got `{}`", e.value)))?;
            // keep the line for later validation messages
            self.entries.insert((format!("#{section}"), key.to_string()), Entry { value: String::new(), line: e.line });
        }
        Ok(())
    }

    fn f64(&mut self, section: &str, key: &str, slot: &mut f64) -> CliResult<()> {
        self.take(section, key, slot, |s| s.parse::<f64>().ok().filter(|v| v.is_finite()), "a finite number")
    }

    fn usize(&mut self, section: &str, key: &str, slot: &mut usize) -> CliResult<()> {
        self.take(section, key, slot, |s| s.parse().ok(), "a nonnegative integer")
    }

    fn vec3(&mut self, section: &str, key: &str, slot: &mut [f64; 3]) -> CliResult<()> {
        self.take(
            section,
            key,
            slot,
            |s| {
                let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().ok().filter(|x| x.is_finite())).collect::<Option<_>>()?;
                <[f64; 3]>::try_from(v).ok()
            },
            "three comma-separated numbers",
        )
    }

    fn string(&mut self, section: &str, key: &str, slot: &mut String) -> CliResult<()> {
        self.take(section, key, slot, |s| Some(s.to_string()), "a string")
    }
}

fn parse_entries(path: &str, text: &str) -> CliResult<Parsed> {
    let mut entries = BTreeMap::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| CliError::Config { path: path.into(), line, key: content.into(), message: "malformed section header".into() })?;
            section = name.to_string();
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| CliError::Config {
            path: path.into(),
            line,
            key: content.into(),
            message: "expected `key = value`".into(),
        })?;
        let k = k.trim();
        if section.is_empty() {
            return Err(CliError::Config { path: path.into(), line, key: k.into(), message: "key outside of any section".into() });
        }
        if entries.insert((section.clone(), k.to_string()), Entry { value: v.trim().to_string(), line }).is_some() {
            return Err(CliError::Config { path: path.into(), line, key: format!("{section}.{k}"), message: "duplicate key".into() });
        }
    }
    Ok(Parsed { path: path.into(), entries })
}

fn keyword<T>(p: &mut Parsed, section: &str, key: &str, slot: &mut T, parse: fn(&str) -> Option<T>, words: &[&str]) -> CliResult<()> {
    let expect = format!("one of {}", words.join(", "));
    p.take(section, key, slot, parse, &expect)
}

impl Scenario {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut s = Self::parse(&path.display().to_string(), &text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        for f in [&mut s.density_file, &mut s.velocity_file, &mut s.force_file] {
            if !f.is_empty() && Path::new(f.as_str()).is_relative() {
                *f = base.join(f.as_str()).display().to_string();
            }
        }
        if s.name == Scenario::default().name {
            if let Some(stem) = path.file_stem() {
                s.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(s)
    }

    /// Parse scenario text; `origin` is used in error messages only.
    pub fn parse(origin: &str, text: &str) -> CliResult<Self> {
        let mut p = parse_entries(origin, text)?;
        let mut s = Scenario::default();

        p.string("run", "name", &mut s.name)?;
        p.take("run", "seed", &mut s.seed, |v| v.parse().ok(), "a nonnegative integer")?;

        p.f64("domain", "extent", &mut s.extent)?;
        p.usize("domain", "cells", &mut s.cells)?;

        p.f64("physics", "mu", &mut s.mu)?;
        p.f64("physics", "delta", &mut s.delta)?;
        p.f64("physics", "lambda", &mut s.lambda)?;
        p.f64("physics", "gamma", &mut s.gamma)?;
        p.f64("physics", "rho_inf", &mut s.rho_inf)?;

        p.f64("numerics", "eps", &mut s.eps)?;
        p.f64("numerics", "dt", &mut s.dt)?;
        p.f64("numerics", "t_end", &mut s.t_end)?;
        p.usize("numerics", "modes", &mut s.modes)?;
        p.f64("numerics", "picard_theta", &mut s.picard_theta)?;
        p.f64("numerics", "picard_tol", &mut s.picard_tol)?;
        p.usize("numerics", "picard_max", &mut s.picard_max)?;
        p.usize("numerics", "smoothing_passes", &mut s.smoothing_passes)?;

        keyword(&mut p, "initial", "density", &mut s.density, DensityKind::parse, DensityKind::KEYWORDS)?;
        p.f64("initial", "density_amplitude", &mut s.density_amplitude)?;
        p.f64("initial", "density_width", &mut s.density_width)?;
        p.f64("initial", "density_radius", &mut s.density_radius)?;
        p.vec3("initial", "density_center", &mut s.density_center)?;
        p.string("initial", "density_file", &mut s.density_file)?;
        keyword(&mut p, "initial", "velocity", &mut s.velocity, VelocityKind::parse, VelocityKind::KEYWORDS)?;
        p.f64("initial", "velocity_amplitude", &mut s.velocity_amplitude)?;
        p.f64("initial", "velocity_radius", &mut s.velocity_radius)?;
        p.vec3("initial", "velocity_center", &mut s.velocity_center)?;
        p.string("initial", "velocity_file", &mut s.velocity_file)?;

        keyword(&mut p, "force", "profile", &mut s.force, ForceKind::parse, ForceKind::KEYWORDS)?;
        p.f64("force", "amplitude", &mut s.force_amplitude)?;
        p.vec3("force", "direction", &mut s.force_direction)?;
        p.string("force", "file", &mut s.force_file)?;

        p.usize("audit", "defect_cells", &mut s.defect_cells)?;
        keyword(&mut p, "audit", "rei_pair", &mut s.rei_pair, PairKind::parse, PairKind::KEYWORDS)?;
        p.f64("audit", "budget_slack", &mut s.budget_slack)?;

        p.string("output", "dir", &mut s.output_dir)?;
        p.usize("output", "snapshot_every", &mut s.snapshot_every)?;

        if let Some(((section, key), e)) = p.entries.iter().find(|((sec, _), _)| !sec.starts_with('#')) {
            return Err(p.err(e.line, &format!("{section}.{key}"), "unknown key"));
        }
        s.validate_with(|sec, key| p.line_of(&format!("#{sec}"), key), origin)?;
        Ok(s)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.validate_with(|_, _| 0, "<scenario>")
    }

    fn validate_with(&self, line: impl Fn(&str, &str) -> usize, origin: &str) -> CliResult<()> {
        let fail = |sec: &str, key: &str, message: String| CliError::Config {
            path: origin.into(),
            line: line(sec, key),
            key: format!("{sec}.{key}"),
            message,
        };
        if ViscosityParams::new(self.mu, self.delta, self.lambda).is_err() {
            let key = if self.mu > 0.0 && self.delta > 0.0 && self.mu >= self.delta { "lambda" } else { "mu" };
            let threshold = if self.mu + 2.0 * self.delta != 0.0 { lambda_threshold(self.mu, self.delta) } else { f64::NAN };
            return Err(fail(
                "physics",
                key,
                format!(
                    "viscosity triple (mu, delta, lambda) = ({}, {}, {}) is inadmissible: need mu >= delta > 0 and lambda > -mu(mu+3delta)/(mu+2delta) = {threshold}",
                    self.mu, self.delta, self.lambda
                ),
            ));
        }
        if !(self.gamma > 1.0) {
            return Err(fail("physics", "gamma", format!("gamma must exceed 1, got {}", self.gamma)));
        }
        let positive = [
            ("physics", "rho_inf", self.rho_inf),
            ("domain", "extent", self.extent),
            ("numerics", "eps", self.eps),
            ("numerics", "dt", self.dt),
            ("numerics", "t_end", self.t_end),
            ("numerics", "picard_theta", self.picard_theta),
            ("numerics", "picard_tol", self.picard_tol),
            ("audit", "budget_slack", self.budget_slack),
        ];
        for (sec, key, v) in positive {
            if !(v > 0.0) {
                return Err(fail(sec, key, format!("must be positive, got {v}")));
            }
        }
        if self.picard_theta > 1.0 {
            return Err(fail("numerics", "picard_theta", format!("must lie in (0, 1], got {}", self.picard_theta)));
        }
        if self.cells < 2 {
            return Err(fail("domain", "cells", format!("need at least 2 cells, got {}", self.cells)));
        }
        let interior = 3 * (self.cells - 1).pow(3);
        if self.modes == 0 || self.modes > interior {
            return Err(fail("numerics", "modes", format!("must lie in 1..={interior}, got {}", self.modes)));
        }
        if self.picard_max == 0 {
            return Err(fail("numerics", "picard_max", "must be positive".into()));
        }
        if self.defect_cells == 0 || !self.cells.is_multiple_of(self.defect_cells) {
            return Err(fail(
                "audit",
                "defect_cells",
                format!("must be a positive divisor of cells = {}, got {}", self.cells, self.defect_cells),
            ));
        }
        if self.density == DensityKind::Uniform {
            // amplitude unused
        } else if self.density != DensityKind::File && !(self.density_amplitude > -1.0) {
            return Err(fail("initial", "density_amplitude", "must exceed -1 to keep the density positive".into()));
        }
        if self.density == DensityKind::Bump && !(self.density_width > 0.0) {
            return Err(fail("initial", "density_width", "must be positive".into()));
        }
        if self.density == DensityKind::CompactBump && !(self.density_radius > 0.0) {
            return Err(fail("initial", "density_radius", "must be positive".into()));
        }
        if self.velocity == VelocityKind::CompactSwirl && !(self.velocity_radius > 0.0) {
            return Err(fail("initial", "velocity_radius", "must be positive".into()));
        }
        for (kind_is_file, sec, key, v) in [
            (self.density == DensityKind::File, "initial", "density_file", &self.density_file),
            (self.velocity == VelocityKind::File, "initial", "velocity_file", &self.velocity_file),
            (self.force == ForceKind::File, "force", "file", &self.force_file),
        ] {
            if kind_is_file && v.is_empty() {
                return Err(fail(sec, key, "a file path is required for the `file` profile".into()));
            }
        }
        Ok(())
    }

    /// Every key with its value, in the file syntax. Parsing this text gives
    /// back the same scenario.
    pub fn to_resolved_string(&self) -> String {
        let v3 = |v: &[f64; 3]| format!("{}, {}, {}", v[0], v[1], v[2]);
        let mut s = String::new();
        let _ = writeln!(s, "[run]\nname = {}\nseed = {}\n", self.name, self.seed);
        let _ = writeln!(s, "[domain]\nextent = {}\ncells = {}\n", self.extent, self.cells);
        let _ = writeln!(
            s,
            "[physics]\nmu = {}\ndelta = {}\nlambda = {}\ngamma = {}\nrho_inf = {}\n",
            self.mu, self.delta, self.lambda, self.gamma, self.rho_inf
        );
        let _ = writeln!(
            s,
            "[numerics]\neps = {}\ndt = {}\nt_end = {}\nmodes = {}\npicard_theta = {}\npicard_tol = {}\npicard_max = {}\nsmoothing_passes = {}\n",
            self.eps, self.dt, self.t_end, self.modes, self.picard_theta, self.picard_tol, self.picard_max, self.smoothing_passes
        );
        let _ = writeln!(
            s,
            "[initial]\ndensity = {}\ndensity_amplitude = {}\ndensity_width = {}\ndensity_radius = {}\ndensity_center = {}\ndensity_file = {}\nvelocity = {}\nvelocity_amplitude = {}\nvelocity_radius = {}\nvelocity_center = {}\nvelocity_file = {}\n",
            self.density.keyword(),
            self.density_amplitude,
            self.density_width,
            self.density_radius,
            v3(&self.density_center),
            self.density_file,
            self.velocity.keyword(),
            self.velocity_amplitude,
            self.velocity_radius,
            v3(&self.velocity_center),
            self.velocity_file,
        );
        let _ = writeln!(
            s,
            "[force]\nprofile = {}\namplitude = {}\ndirection = {}\nfile = {}\n",
            self.force.keyword(),
            self.force_amplitude,
            v3(&self.force_direction),
            self.force_file
        );
        let _ = writeln!(
            s,
            "[audit]\ndefect_cells = {}\nrei_pair = {}\nbudget_slack = {}\n",
            self.defect_cells,
            self.rei_pair.keyword(),
            self.budget_slack
        );
        let _ = write!(s, "[output]\ndir = {}\nsnapshot_every = {}\n", self.output_dir, self.snapshot_every);
        s
    }

    pub fn domain(&self) -> CliResult<DiscreteDomain> {
        Ok(DiscreteDomain::new(self.extent, self.cells)?)
    }

    pub fn params(&self) -> CliResult<ViscosityParams> {
        Ok(ViscosityParams::new(self.mu, self.delta, self.lambda)?)
    }

    pub fn law(&self) -> CliResult<PressureLaw> {
        Ok(PressureLaw::new(self.gamma, self.rho_inf)?)
    }

    /// Number of time steps, rounding T/dt to the nearest integer.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }

    pub fn initial_density(&self, d: &DiscreteDomain) -> CliResult<ScalarField> {
        let ri = self.rho_inf;
        let a = self.density_amplitude;
        let c = self.density_center;
        let dist2 = move |y: [f64; 3]| (0..3).map(|i| (y[i] - c[i]).powi(2)).sum::<f64>();
        let rho = match self.density {
            DensityKind::Uniform => ScalarField::constant(*d, ri),
            DensityKind::Bump => {
                let w = self.density_width;
                ScalarField::from_fn(*d, |y| ri * (1.0 + a * (-w * dist2(y)).exp()))
            }
            DensityKind::CompactBump => {
                let r2 = self.density_radius.powi(2);
                ScalarField::from_fn(*d, |y| ri * (1.0 + a * (1.0 - dist2(y) / r2).max(0.0).powi(3)))
            }
            DensityKind::File => match self.read_field(&self.density_file, d)? {
                SnapshotField::Scalar(s) => s,
                SnapshotField::Vector(_) => return Err(self.file_error("initial.density_file", "expected a scalar snapshot")),
            },
        };
        if !(rho.min() > 0.0) {
            return Err(CliError::Config {
                path: self.name.clone(),
                line: 0,
                key: "initial.density".into(),
                message: "initial density must be positive".into(),
            });
        }
        if self.smoothing_passes > 0 {
            let (lo, hi) = (rho.min(), rho.max());
            return Ok(anisoflow::continuity::mollify(&rho, lo, hi, self.smoothing_passes)?);
        }
        Ok(rho)
    }

    /// Initial velocity before projection onto the Galerkin space.
    pub fn initial_velocity(&self, d: &DiscreteDomain) -> CliResult<VectorField> {
        let a = self.velocity_amplitude;
        let r = d.extent();
        Ok(match self.velocity {
            VelocityKind::Zero => VectorField::zeros(*d),
            VelocityKind::Swirl => VectorField::from_fn_no_slip(*d, |y| {
                let b: f64 = y.iter().map(|x| 1.0 - (x / r).powi(2)).product();
                [a * b * y[1] / r, -a * b * y[0] / r, 0.5 * a * b]
            }),
            VelocityKind::CompactSwirl => {
                let c = self.velocity_center;
                let r2 = self.velocity_radius.powi(2);
                VectorField::from_fn_no_slip(*d, |y| {
                    let z = [y[0] - c[0], y[1] - c[1], y[2] - c[2]];
                    let b = (1.0 - (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]) / r2).max(0.0).powi(3);
                    [a * b * z[1], -a * b * z[0], 0.5 * a * b]
                })
            }
            VelocityKind::File => match self.read_field(&self.velocity_file, d)? {
                SnapshotField::Vector(mut v) => {
                    v.enforce_no_slip();
                    v
                }
                SnapshotField::Scalar(_) => return Err(self.file_error("initial.velocity_file", "expected a vector snapshot")),
            },
        })
    }

    pub fn force_field(&self, d: &DiscreteDomain) -> CliResult<VectorField> {
        let a = self.force_amplitude;
        Ok(match self.force {
            ForceKind::Zero => VectorField::zeros(*d),
            ForceKind::Uniform => {
                let e = self.force_direction;
                VectorField::from_fn(*d, |_| [a * e[0], a * e[1], a * e[2]])
            }
            ForceKind::Swirl => VectorField::from_fn(*d, |y| {
                let g = a * (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])).exp();
                [-g * y[1], g * y[0], 0.0]
            }),
            ForceKind::File => match self.read_field(&self.force_file, d)? {
                SnapshotField::Vector(v) => v,
                SnapshotField::Scalar(_) => return Err(self.file_error("force.file", "expected a vector snapshot")),
            },
        })
    }

    fn file_error(&self, key: &str, message: &str) -> CliError {
        CliError::Config { path: self.name.clone(), line: 0, key: key.into(), message: message.into() }
    }

    /// Read a snapshot and bring it onto `d`: same grid as is, otherwise
    /// trilinear interpolation when the boxes coincide.
    fn read_field(&self, file: &str, d: &DiscreteDomain) -> CliResult<SnapshotField> {
        let path = Path::new(file);
        let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let snap = read_snapshot(std::io::BufReader::new(f))?;
        if snap.field.domain().same_grid(d) {
            return Ok(snap.field);
        }
        Ok(match snap.field {
            SnapshotField::Scalar(s) => SnapshotField::Scalar(s.interpolate(d)?),
            SnapshotField::Vector(v) => SnapshotField::Vector(v.interpolate(d)?),
        })
    }
}
