//! Plain-text file formats: profiles, branch tables, spectra, monitor
//! series, space-time matrices and wavenumber tables.
//!
//! Every file starts with `#` comment lines carrying provenance (tool
//! version, timestamp, config echo). Readers skip them.
//!
//! A profile is one header line `L=..,n=..,r=..,b=..,alpha=..,beta=..,c=..`
//! followed by exactly `n` lines `x,u`. Numbers use Rust's shortest
//! round-trip formatting, so write/read is lossless.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::continuation::{Branch, BranchPoint, EventType};
use crate::diagnostics::{Slant, WavenumberSegment};
use crate::error::{Error, Result};
use crate::evolve::{MonitorSample, Trajectory};
use crate::grid::{Field, Grid};
use crate::model::ModelParams;
use crate::stability::{ModeParity, Spectrum};

/// Lines written at the top of every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub timestamp: String,
    /// Full configuration, serialized (JSON).
    pub config: String,
}

impl Provenance {
    pub fn new(timestamp: impl Into<String>, config: impl Into<String>) -> Provenance {
        Provenance {
            tool: "esh".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: timestamp.into(),
            config: config.into(),
        }
    }

    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# tool: {} {}", self.tool, self.version)?;
        writeln!(w, "# timestamp: {}", self.timestamp)?;
        // the config must stay on one comment line
        writeln!(w, "# config: {}", self.config.replace(['\n', '\r'], " "))
    }

    /// Reads the provenance block from the leading comment lines, if present.
    pub fn parse(text: &str) -> Option<Provenance> {
        let mut tool = None;
        let mut timestamp = None;
        let mut config = None;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line[1..].trim_start();
            if let Some(v) = body.strip_prefix("tool: ") {
                tool = Some(v.to_string());
            } else if let Some(v) = body.strip_prefix("timestamp: ") {
                timestamp = Some(v.to_string());
            } else if let Some(v) = body.strip_prefix("config: ") {
                config = Some(v.to_string());
            }
        }
        let tool = tool?;
        let (name, version) = tool.split_once(' ').unwrap_or((&tool, ""));
        Some(Provenance { tool: name.into(), version: version.into(), timestamp: timestamp?, config: config? })
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Parse { line: 0, msg: e.to_string() }
}

fn parse_f64(s: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse { line, msg: format!("bad {what} '{}'", s.trim()) })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite {what}") });
    }
    Ok(v)
}

/// A steady state together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub params: ModelParams,
    pub c: f64,
    pub u: Field,
}

pub fn write_profile(w: &mut impl Write, prov: &Provenance, profile: &Profile) -> std::io::Result<()> {
    prov.write(w)?;
    let g = profile.u.grid();
    let p = &profile.params;
    writeln!(
        w,
        "L={},n={},r={},b={},alpha={},beta={},c={}",
        g.length(),
        g.n(),
        p.r,
        p.b,
        p.alpha,
        p.beta,
        profile.c
    )?;
    for (x, u) in g.nodes().iter().zip(profile.u.values()) {
        writeln!(w, "{x},{u}")?;
    }
    Ok(())
}

/// Largest accepted node count, to bound allocation on malformed input.
pub const MAX_PROFILE_NODES: usize = 1 << 16;

pub fn read_profile(r: impl BufRead) -> Result<Profile> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = loop {
        match lines.next() {
            Some((i, l)) => {
                let l = l.map_err(io_err)?;
                if !l.starts_with('#') && !l.trim().is_empty() {
                    break (i, l);
                }
            }
            None => return Err(Error::Parse { line: 0, msg: "missing profile header".into() }),
        }
    };
    let mut vals: [Option<String>; 7] = Default::default();
    const KEYS: [&str; 7] = ["L", "n", "r", "b", "alpha", "beta", "c"];
    for item in header.split(',') {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: hline, msg: format!("expected key=value, got '{item}'") })?;
        let idx = KEYS
            .iter()
            .position(|&key| key == k.trim())
            .ok_or_else(|| Error::Parse { line: hline, msg: format!("unknown header key '{}'", k.trim()) })?;
        if vals[idx].is_some() {
            return Err(Error::Parse { line: hline, msg: format!("duplicate key '{}'", KEYS[idx]) });
        }
        vals[idx] = Some(v.trim().to_string());
    }
    let get = |i: usize| {
        vals[i].clone().ok_or_else(|| Error::Parse { line: hline, msg: format!("missing key '{}'", KEYS[i]) })
    };
    let length = parse_f64(&get(0)?, hline, "L")?;
    let n: usize = get(1)?.parse().map_err(|_| Error::Parse { line: hline, msg: "bad n".into() })?;
    if n > MAX_PROFILE_NODES {
        return Err(Error::Parse { line: hline, msg: format!("n = {n} exceeds {MAX_PROFILE_NODES}") });
    }
    let grid = Grid::new(length, n).map_err(|e| Error::Parse { line: hline, msg: e.to_string() })?;
    let num = |i: usize, name: &str| -> Result<f64> { parse_f64(&get(i)?, hline, name) };
    let params = ModelParams::new(num(2, "r")?, num(3, "b")?, num(4, "alpha")?, num(5, "beta")?)
        .map_err(|e| Error::Parse { line: hline, msg: e.to_string() })?;
    let c = num(6, "c")?;

    let mut u = Vec::with_capacity(n);
    for (i, l) in lines {
        let l = l.map_err(io_err)?;
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        if u.len() == n {
            return Err(Error::Parse { line: i, msg: format!("more than n = {n} data lines") });
        }
        let (xs, us) = l.split_once(',').ok_or_else(|| Error::Parse { line: i, msg: "expected 'x,u'".into() })?;
        let x = parse_f64(xs, i, "x")?;
        let expect = grid.nodes()[u.len()];
        if (x - expect).abs() > 1e-9 * length {
            return Err(Error::Parse { line: i, msg: format!("node {x} does not match grid node {expect}") });
        }
        u.push(parse_f64(us, i, "u")?);
    }
    if u.len() != n {
        return Err(Error::Parse { line: 0, msg: format!("expected {n} data lines, found {}", u.len()) });
    }
    Ok(Profile { params, c, u: Field::new(grid, u)? })
}

fn event_name(e: Option<EventType>) -> &'static str {
    match e {
        None => "",
        Some(EventType::Fold) => "fold",
        Some(EventType::Pitchfork) => "pitchfork",
        Some(EventType::Hopf) => "hopf",
        Some(EventType::RungEnd) => "rung_end",
    }
}

fn parse_event(s: &str, line: usize) -> Result<Option<EventType>> {
    Ok(match s.trim() {
        "" => None,
        "fold" => Some(EventType::Fold),
        "pitchfork" => Some(EventType::Pitchfork),
        "hopf" => Some(EventType::Hopf),
        "rung_end" => Some(EventType::RungEnd),
        other => return Err(Error::Parse { line, msg: format!("unknown event '{other}'") }),
    })
}

/// One row of a branch file. Counts are absent where no spectrum was computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub index: usize,
    pub r: f64,
    pub l2norm: f64,
    pub c: f64,
    pub m_r: Option<usize>,
    pub m_c: Option<usize>,
    pub n_r: Option<usize>,
    pub n_c: Option<usize>,
    pub event: Option<EventType>,
}

impl BranchRow {
    pub fn from_point(index: usize, p: &BranchPoint) -> BranchRow {
        BranchRow {
            index,
            r: p.r,
            l2norm: p.norm,
            c: p.state.c,
            m_r: p.counts.map(|c| c.m_r),
            m_c: p.counts.map(|c| c.m_c),
            n_r: p.counts.map(|c| c.n_r),
            n_c: p.counts.map(|c| c.n_c),
            event: p.event,
        }
    }
}

pub const BRANCH_COLUMNS: [&str; 9] = ["index", "r", "l2norm", "c", "m_r", "m_c", "n_r", "n_c", "event"];

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, msg: e.to_string() }
}

pub fn write_branch(w: &mut impl Write, prov: &Provenance, branch: &Branch) -> Result<()> {
    let rows: Vec<BranchRow> = branch.points.iter().enumerate().map(|(i, p)| BranchRow::from_point(i, p)).collect();
    write_branch_rows(w, prov, &rows)
}

pub fn write_branch_rows(w: &mut impl Write, prov: &Provenance, rows: &[BranchRow]) -> Result<()> {
    prov.write(w).map_err(io_err)?;
    let mut c = csv_writer(w);
    c.write_record(BRANCH_COLUMNS).map_err(csv_err)?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    for row in rows {
        c.write_record([
            row.index.to_string(),
            row.r.to_string(),
            row.l2norm.to_string(),
            row.c.to_string(),
            opt(row.m_r),
            opt(row.m_c),
            opt(row.n_r),
            opt(row.n_c),
            event_name(row.event).to_string(),
        ])
        .map_err(csv_err)?;
    }
    c.flush().map_err(io_err)
}

fn csv_reader<R: std::io::Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn check_header<R: std::io::Read>(rd: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = rd.headers().map_err(csv_err)?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected columns {}, got {}", expected.join(","), h.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(())
}

pub fn read_branch(r: impl std::io::Read) -> Result<Vec<BranchRow>> {
    let mut rd = csv_reader(r);
    check_header(&mut rd, &BRANCH_COLUMNS)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != BRANCH_COLUMNS.len() {
            return Err(Error::Parse { line, msg: format!("expected {} fields", BRANCH_COLUMNS.len()) });
        }
        let count = |i: usize| -> Result<Option<usize>> {
            let s = &rec[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::Parse { line, msg: format!("bad {} '{s}'", BRANCH_COLUMNS[i]) })
            }
        };
        let index = rec[0].parse().map_err(|_| Error::Parse { line, msg: format!("bad index '{}'", &rec[0]) })?;
        let l2norm = parse_f64(&rec[2], line, "l2norm")?;
        if l2norm < 0.0 {
            return Err(Error::Parse { line, msg: "negative l2norm".into() });
        }
        let counts = [count(4)?, count(5)?, count(6)?, count(7)?];
        if counts.iter().any(|c| c.is_some()) && counts.iter().any(|c| c.is_none()) {
            return Err(Error::Parse { line, msg: "stability counts must be all present or all empty".into() });
        }
        out.push(BranchRow {
            index,
            r: parse_f64(&rec[1], line, "r")?,
            l2norm,
            c: parse_f64(&rec[3], line, "c")?,
            m_r: counts[0],
            m_c: counts[1],
            n_r: counts[2],
            n_c: counts[3],
            event: parse_event(&rec[8], line)?,
        });
    }
    Ok(out)
}

pub const SPECTRUM_COLUMNS: [&str; 6] = ["point", "re", "im", "parity", "goldstone", "r"];

fn parity_name(p: ModeParity) -> &'static str {
    match p {
        ModeParity::Even => "even",
        ModeParity::Odd => "odd",
        ModeParity::Mixed => "mixed",
    }
}

/// Spectra of several points, one row per eigenvalue.
pub fn write_spectra(w: &mut impl Write, prov: &Provenance, spectra: &[(usize, f64, &Spectrum)]) -> Result<()> {
    prov.write(w).map_err(io_err)?;
    let mut c = csv_writer(w);
    c.write_record(SPECTRUM_COLUMNS).map_err(csv_err)?;
    for (point, r, spectrum) in spectra {
        for e in &spectrum.pairs {
            c.write_record([
                point.to_string(),
                e.sigma.re.to_string(),
                e.sigma.im.to_string(),
                parity_name(e.parity).to_string(),
                e.goldstone.to_string(),
                r.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    c.flush().map_err(io_err)
}

pub const MONITOR_COLUMNS: [&str; 4] = ["t", "energy", "norm", "midpoint"];

pub fn write_monitors(w: &mut impl Write, prov: &Provenance, samples: &[MonitorSample]) -> Result<()> {
    prov.write(w).map_err(io_err)?;
    let mut c = csv_writer(w);
    c.write_record(MONITOR_COLUMNS).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for s in samples {
        c.write_record([s.t.to_string(), opt(s.energy), opt(s.norm), opt(s.midpoint)]).map_err(csv_err)?;
    }
    c.flush().map_err(io_err)
}

pub fn read_monitors(r: impl std::io::Read) -> Result<Vec<MonitorSample>> {
    let mut rd = csv_reader(r);
    check_header(&mut rd, &MONITOR_COLUMNS)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != MONITOR_COLUMNS.len() {
            return Err(Error::Parse { line, msg: format!("expected {} fields", MONITOR_COLUMNS.len()) });
        }
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                parse_f64(&rec[i], line, MONITOR_COLUMNS[i]).map(Some)
            }
        };
        out.push(MonitorSample { t: parse_f64(&rec[0], line, "t")?, energy: opt(1)?, norm: opt(2)?, midpoint: opt(3)? });
    }
    Ok(out)
}

/// Rows are snapshot times, columns grid nodes. The first row holds the
/// node positions after a `t` cell.
pub fn write_space_time(w: &mut impl Write, prov: &Provenance, traj: &Trajectory) -> Result<()> {
    prov.write(w).map_err(io_err)?;
    let mut c = csv_writer(w);
    let Some(first) = traj.snapshots.first() else { return c.flush().map_err(io_err) };
    let mut head = vec!["t".to_string()];
    head.extend(first.grid().nodes().iter().map(|x| x.to_string()));
    c.write_record(&head).map_err(csv_err)?;
    for (t, u) in traj.times.iter().zip(&traj.snapshots) {
        let mut row = vec![t.to_string()];
        row.extend(u.values().iter().map(|v| v.to_string()));
        c.write_record(&row).map_err(csv_err)?;
    }
    c.flush().map_err(io_err)
}

pub const WAVENUMBER_COLUMNS: [&str; 4] = ["segment", "r", "k", "slant"];

pub fn write_wavenumbers(w: &mut impl Write, prov: &Provenance, segments: &[WavenumberSegment]) -> Result<()> {
    prov.write(w).map_err(io_err)?;
    let mut c = csv_writer(w);
    c.write_record(WAVENUMBER_COLUMNS).map_err(csv_err)?;
    for (i, s) in segments.iter().enumerate() {
        let slant = match s.slant {
            Slant::UpRight => "up_right",
            Slant::UpLeft => "up_left",
        };
        for (r, k) in &s.samples {
            c.write_record([i.to_string(), r.to_string(), k.to_string(), slant.to_string()]).map_err(csv_err)?;
        }
    }
    c.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn prov() -> Provenance {
        Provenance::new("2026-01-01T00:00:00Z", "{\"b\":1.8}")
    }

    fn sample_profile() -> Profile {
        let g = Grid::new(32.0 * PI, 64).unwrap();
        let u = Field::from_fn(g, |x| 1.2 / (0.5 * x).cosh() * x.cos() + 1e-17);
        Profile { params: ModelParams::new(-0.28, 1.8, 0.1, 0.2).unwrap(), c: -3.5e-4, u }
    }

    #[test]
    fn profile_roundtrip_is_exact() {
        let p = sample_profile();
        let mut buf = Vec::new();
        write_profile(&mut buf, &prov(), &p).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# tool: esh "));
        assert_eq!(Provenance::parse(&text).unwrap(), prov());
        let q = read_profile(&buf[..]).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.u.values(), q.u.values());
    }

    #[test]
    fn profile_errors() {
        let p = sample_profile();
        let mut buf = Vec::new();
        write_profile(&mut buf, &prov(), &p).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert!(read_profile(truncated.as_bytes()).is_err());
        let bad_key = text.replace("alpha=", "gamma=");
        assert!(read_profile(bad_key.as_bytes()).is_err());
        let nan = text.replacen(",-", ",NaN", 1);
        assert!(read_profile(nan.as_bytes()).is_err());
        assert!(read_profile("".as_bytes()).is_err());
        assert!(read_profile("L=1,n=999999999,r=0,b=0,alpha=0,beta=0,c=0\n".as_bytes()).is_err());
    }

    #[test]
    fn branch_roundtrip() {
        let rows = vec![
            BranchRow { index: 0, r: -0.1, l2norm: 0.3, c: 0.0, m_r: None, m_c: None, n_r: None, n_c: None, event: None },
            BranchRow {
                index: 1,
                r: -0.2881234567890123,
                l2norm: 0.5,
                c: 1e-5,
                m_r: Some(1),
                m_c: Some(0),
                n_r: Some(0),
                n_c: Some(2),
                event: Some(EventType::Fold),
            },
            BranchRow { index: 2, r: -0.2, l2norm: 0.6, c: 0.0, m_r: None, m_c: None, n_r: None, n_c: None, event: Some(EventType::RungEnd) },
        ];
        let mut buf = Vec::new();
        write_branch_rows(&mut buf, &prov(), &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("index,r,l2norm,c,m_r,m_c,n_r,n_c,event"));
        assert_eq!(read_branch(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn branch_errors() {
        let head = "index,r,l2norm,c,m_r,m_c,n_r,n_c,event\n";
        assert!(read_branch("a,b\n".as_bytes()).is_err());
        assert!(read_branch(format!("{head}0,0.1,0.2,0,1,,0,0,\n").as_bytes()).is_err());
        assert!(read_branch(format!("{head}0,0.1,-0.2,0,,,,,\n").as_bytes()).is_err());
        assert!(read_branch(format!("{head}0,0.1,0.2,0,,,,,saddle\n").as_bytes()).is_err());
        assert!(read_branch(format!("{head}0,0.1,0.2,0,,,,\n").as_bytes()).is_err());
        assert!(read_branch(format!("{head}0,inf,0.2,0,,,,,\n").as_bytes()).is_err());
    }

    #[test]
    fn monitor_roundtrip() {
        let s = vec![
            MonitorSample { t: 0.0, energy: Some(-1.5), norm: Some(2.0), midpoint: None },
            MonitorSample { t: 0.1, energy: None, norm: Some(2.5), midpoint: Some(-0.25) },
        ];
        let mut buf = Vec::new();
        write_monitors(&mut buf, &prov(), &s).unwrap();
        assert_eq!(read_monitors(&buf[..]).unwrap(), s);
    }
}
