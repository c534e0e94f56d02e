//! Instance files, density CSVs and result summaries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::measures::{make_measure, AtomicMeasure, MeasureSpec, OneOrMany, Provenance};
use crate::scalar::{Real, Tolerances};
use crate::solver::{ConstrainedDensity, ConstraintMode, SolveOptions, SolveResult};
use crate::transport::UnstablePair;

/// Entries at or below this are left out of density files.
pub const DENSITY_CUTOFF: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    /// Dimension inferred from the measures when omitted.
    Euclidean {
        #[serde(default)]
        dim: Option<usize>,
    },
    Torus {
        period: Vec<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
    pub density: Option<String>,
    pub summary: Option<String>,
    pub plot: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub geometry: GeometrySpec,
    pub phi: MeasureSpec,
    pub psi: MeasureSpec,
    #[serde(default)]
    pub solver: SolveOptions<f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn spec_dim(m: &MeasureSpec) -> Option<usize> {
    let many = |v: &OneOrMany<f64>| match v {
        OneOrMany::Many(v) => Some(v.len()),
        OneOrMany::One(_) => None,
    };
    match m {
        MeasureSpec::Atoms { atoms } => atoms.first().map(|a| a.coords.len()),
        MeasureSpec::GridLebesgue { window, resolution, .. } => window.as_ref().map(Vec::len).or(match resolution {
            OneOrMany::Many(v) => Some(v.len()),
            OneOrMany::One(_) => None,
        }),
        MeasureSpec::Lattice { spacing, offset, window, .. } => {
            many(spacing).or(offset.as_ref().map(Vec::len)).or(window.as_ref().map(Vec::len))
        }
        MeasureSpec::Poisson { window, .. } => window.as_ref().map(Vec::len),
        MeasureSpec::Product { factors } => Some(factors.iter().map(|f| f.dim).sum()),
    }
}

impl InstanceSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let s = &self.solver;
        if !(s.convergence_tol.is_finite() && s.convergence_tol > 0.0) {
            return Err(Error::InvalidSpec(format!("convergence_tol must be positive, got {}", s.convergence_tol)));
        }
        if s.max_stages == 0 {
            return Err(Error::InvalidSpec("max_stages must be positive".into()));
        }
        self.dim().map(|_| ())
    }

    /// Ambient dimension, from the geometry or else from the measure specs.
    pub fn dim(&self) -> Result<usize> {
        let declared = match &self.geometry {
            GeometrySpec::Euclidean { dim } => *dim,
            GeometrySpec::Torus { period } => Some(period.len()),
        };
        let hints = [spec_dim(&self.phi), spec_dim(&self.psi)];
        let mut dim = declared;
        for h in hints.into_iter().flatten() {
            match dim {
                Some(d) if d != h => return Err(Error::DimensionMismatch { expected: d, got: h }),
                _ => dim = Some(h),
            }
        }
        dim.ok_or_else(|| Error::InvalidSpec("cannot infer the dimension; set geometry.dim".into()))
    }

    pub fn geometry<S: Real>(&self) -> Result<Geometry<S>> {
        match &self.geometry {
            GeometrySpec::Euclidean { .. } => Geometry::euclidean(self.dim()?),
            GeometrySpec::Torus { period } => Geometry::torus(period.iter().map(|&p| S::of(p)).collect()),
        }
    }

    pub fn measures<S: Real>(&self) -> Result<(Arc<AtomicMeasure<S>>, Arc<AtomicMeasure<S>>)> {
        let g = self.geometry::<S>()?;
        Ok((Arc::new(make_measure(&self.phi, &g)?), Arc::new(make_measure(&self.psi, &g)?)))
    }

    pub fn solve_options<S: Real>(&self) -> SolveOptions<S> {
        SolveOptions {
            convergence_tol: S::of(self.solver.convergence_tol),
            max_stages: self.solver.max_stages,
            constraint_mode: self.solver.constraint_mode,
            extrapolate: self.solver.extrapolate,
        }
    }
}

/// Metadata carried in the `#` lines of a density file.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityHeader {
    pub sites: usize,
    pub centers: usize,
    pub mode: ConstraintMode,
    pub role_swap: bool,
    pub shell_tol: f64,
    pub mass_tol: f64,
    pub value_tol: f64,
    pub resolution: Option<Vec<usize>>,
    pub stages: Option<usize>,
    pub converged: Option<bool>,
}

fn mode_name(m: ConstraintMode) -> &'static str {
    match m {
        ConstraintMode::DensityCap => "density_cap",
        ConstraintMode::CountingCap => "counting_cap",
    }
}

fn grid_resolution(p: &Provenance) -> Option<Vec<usize>> {
    match p {
        Provenance::Grid { resolution, .. } => Some(resolution.clone()),
        Provenance::Translated { inner } => grid_resolution(inner),
        _ => None,
    }
}

impl DensityHeader {
    pub fn for_density<S: Real>(f: &ConstrainedDensity<S>) -> Self {
        let t = f.tolerances();
        Self {
            sites: f.site_count(),
            centers: f.center_count(),
            mode: f.mode(),
            role_swap: f.role_swap(),
            shell_tol: t.shell.to_f64_lossy(),
            mass_tol: t.mass.to_f64_lossy(),
            value_tol: t.value.to_f64_lossy(),
            resolution: grid_resolution(f.phi().provenance()),
            stages: None,
            converged: None,
        }
    }

    pub fn tolerances<S: Real>(&self) -> Tolerances<S> {
        Tolerances { shell: S::of(self.shell_tol), mass: S::of(self.mass_tol), value: S::of(self.value_tol) }
    }

    fn lines(&self) -> Vec<String> {
        let mut out = vec![
            "# stable-transport density".to_string(),
            format!("# sites={}", self.sites),
            format!("# centers={}", self.centers),
            format!("# mode={}", mode_name(self.mode)),
            format!("# role_swap={}", self.role_swap),
            format!("# shell_tol={:e}", self.shell_tol),
            format!("# mass_tol={:e}", self.mass_tol),
            format!("# value_tol={:e}", self.value_tol),
        ];
        if let Some(r) = &self.resolution {
            out.push(format!("# resolution={}", r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x")));
        }
        if let Some(s) = self.stages {
            out.push(format!("# stages={s}"));
        }
        if let Some(c) = self.converged {
            out.push(format!("# converged={c}"));
        }
        out
    }

    fn parse(lines: &[String]) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for l in lines {
            if let Some((k, v)) = l.trim_start_matches('#').trim().split_once('=') {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::Parse(format!("density header lacks {k}")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Parse(format!("bad {k} in header"))) };
        let count = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::Parse(format!("bad {k} in header"))) };
        let mode = match get("mode")?.as_str() {
            "density_cap" => ConstraintMode::DensityCap,
            "counting_cap" => ConstraintMode::CountingCap,
            other => return Err(Error::Parse(format!("unknown mode {other}"))),
        };
        Ok(Self {
            sites: count("sites")?,
            centers: count("centers")?,
            mode,
            role_swap: kv.get("role_swap").is_some_and(|v| v == "true"),
            shell_tol: num("shell_tol")?,
            mass_tol: num("mass_tol")?,
            value_tol: num("value_tol")?,
            resolution: kv
                .get("resolution")
                .map(|r| r.split('x').map(|x| x.parse().map_err(|_| Error::Parse("bad resolution".into()))).collect())
                .transpose()?,
            stages: kv.get("stages").and_then(|v| v.parse().ok()),
            converged: kv.get("converged").and_then(|v| v.parse().ok()),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DensityRecord {
    site_index: usize,
    center_index: usize,
    f: f64,
}

/// Sparse CSV: `#` header lines, then `site_index,center_index,f` for entries
/// above [`DENSITY_CUTOFF`].
pub fn write_density<S: Real>(f: &ConstrainedDensity<S>, header: &DensityHeader, out: impl Write) -> Result<()> {
    let mut out = BufWriter::new(out);
    for l in header.lines() {
        writeln!(out, "{l}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for (i, j, v) in f.entries() {
        let v = v.to_f64_lossy();
        if v > DENSITY_CUTOFF {
            w.serialize(DensityRecord { site_index: i, center_index: j, f: v })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_density<S: Real>(f: &ConstrainedDensity<S>, header: &DensityHeader, path: impl AsRef<Path>) -> Result<()> {
    write_density(f, header, File::create(path)?)
}

/// Read a density file against the measures it was computed for.
pub fn read_density<S: Real>(
    input: impl Read,
    phi: Arc<AtomicMeasure<S>>,
    psi: Arc<AtomicMeasure<S>>,
) -> Result<(ConstrainedDensity<S>, DensityHeader)> {
    let mut reader = BufReader::new(input);
    let mut header_lines = Vec::new();
    let mut body = String::new();
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 {
        if line.starts_with('#') {
            header_lines.push(line.trim_end().to_string());
        } else {
            body.push_str(&line);
        }
        line.clear();
    }
    let header = DensityHeader::parse(&header_lines)?;
    if header.sites != phi.len() || header.centers != psi.len() {
        return Err(Error::Parse(format!(
            "density is {}x{} but the instance has {} sites and {} centers",
            header.sites,
            header.centers,
            phi.len(),
            psi.len()
        )));
    }
    let mut triplets = Vec::new();
    for rec in csv::Reader::from_reader(body.as_bytes()).deserialize() {
        let r: DensityRecord = rec?;
        triplets.push((r.site_index, r.center_index, S::of(r.f)));
    }
    let f = ConstrainedDensity::from_triplets(phi, psi, triplets, header.mode)?;
    Ok((f, header))
}

pub fn load_density<S: Real>(
    path: impl AsRef<Path>,
    phi: Arc<AtomicMeasure<S>>,
    psi: Arc<AtomicMeasure<S>>,
) -> Result<(ConstrainedDensity<S>, DensityHeader)> {
    read_density(File::open(path)?, phi, psi)
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub sites: usize,
    pub centers: usize,
    pub stages_run: usize,
    pub stages_computed: usize,
    pub residual: f64,
    pub converged: bool,
    pub nnz: usize,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl SolveSummary {
    pub fn new<S: Real>(res: &SolveResult<S>) -> Self {
        Self {
            sites: res.density.site_count(),
            centers: res.density.center_count(),
            stages_run: res.stages_run,
            stages_computed: res.stages_computed,
            residual: res.residual.to_f64_lossy(),
            converged: res.converged,
            nnz: res.density.nnz(),
            g: res.g.iter().map(|x| x.to_f64_lossy()).collect(),
            h: res.h.iter().map(|x| x.to_f64_lossy()).collect(),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// One row per atom: `index, x0, x1, ..., weight`.
pub fn write_atoms<S: Real>(m: &AtomicMeasure<S>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string()];
    header.extend((0..m.dim()).map(|k| format!("x{k}")));
    header.push("weight".into());
    w.write_record(&header)?;
    for i in 0..m.len() {
        let mut rec = vec![i.to_string()];
        rec.extend(m.position(i).iter().map(|c| c.to_f64_lossy().to_string()));
        rec.push(m.weight(i).to_f64_lossy().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_unstable_pairs<S: Real>(pairs: &[UnstablePair<S>], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["site_index", "center_index", "distance", "site_reason", "center_reason"])?;
    for p in pairs {
        w.write_record([
            p.site.to_string(),
            p.center.to_string(),
            p.distance.to_f64_lossy().to_string(),
            format!("{:?}", p.site_reason),
            format!("{:?}", p.center_reason),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `radius,mean,std_error` rows.
pub fn write_radii_curve(radii: &[f64], means: &[f64], errors: &[f64], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["radius", "mean", "std_error"])?;
    for ((r, m), e) in radii.iter().zip(means).zip(errors) {
        w.write_record([r.to_string(), m.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
