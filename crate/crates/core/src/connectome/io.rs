//! Edge-list and landscape files.
//!
//! Connectome files are CSV with `# key: value` metadata lines on top:
//!
//! ```text
//! # anisonet-connectome v1
//! # kind: anisotropic
//! # config: {...json...}
//! source,target,weight,delay
//! 0,61,12,1
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{select_input_patch, Connectome, DirectionLandscape, Edge, PoolingLayout};
use crate::config::{NetworkConfig, NetworkKind};
use crate::error::{Error, Result};

const MAGIC: &str = "# anisonet-connectome v1";

pub fn write_connectome(path: &Path, connectome: &Connectome, cfg: &NetworkConfig) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{MAGIC}").map_err(io)?;
    writeln!(out, "# kind: {}", connectome.kind).map_err(io)?;
    writeln!(out, "# config: {}", serde_json::to_string(cfg)?).map_err(io)?;
    writeln!(out, "source,target,weight,delay").map_err(io)?;
    for e in &connectome.edges {
        writeln!(out, "{},{},{},{}", e.source, e.target, e.weight, e.delay).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_connectome(path: &Path) -> Result<(NetworkConfig, Connectome)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut kind = None;
    let mut cfg: Option<NetworkConfig> = None;
    let mut edges = Vec::new();
    let mut seen_header = false;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 1 && line.trim() != MAGIC {
            return Err(parse_err(lineno, "missing connectome header".into()));
        }
        if let Some(meta) = line.strip_prefix("# ") {
            if let Some(v) = meta.strip_prefix("kind: ") {
                kind = Some(match v.trim() {
                    "anisotropic" => NetworkKind::Anisotropic,
                    "random" => NetworkKind::Random,
                    other => return Err(parse_err(lineno, format!("unknown kind {other}"))),
                });
            } else if let Some(v) = meta.strip_prefix("config: ") {
                cfg = Some(serde_json::from_str(v).map_err(|e| parse_err(lineno, e.to_string()))?);
            }
            continue;
        }
        if !seen_header {
            if line.trim() != "source,target,weight,delay" {
                return Err(parse_err(lineno, "expected column header".into()));
            }
            seen_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let num = |s: &str| -> Result<i64> {
            s.trim()
                .parse::<i64>()
                .map_err(|e| parse_err(lineno, format!("`{s}`: {e}")))
        };
        edges.push(Edge {
            source: num(fields[0])? as u32,
            target: num(fields[1])? as u32,
            weight: num(fields[2])? as i32,
            delay: num(fields[3])? as u8,
        });
    }
    let cfg = cfg.ok_or_else(|| parse_err(0, "missing config metadata".into()))?;
    let kind = kind.ok_or_else(|| parse_err(0, "missing kind metadata".into()))?;
    cfg.validate()?;
    let pooling = PoolingLayout::build(&cfg.grid, cfg.pooling.window)?;
    let input_patch = select_input_patch(&cfg.grid, cfg.input.origin(), cfg.input.size)?;
    let n = cfg.grid.exc_count() + cfg.grid.inh_count() + pooling.unit_count();
    if let Some(e) = edges.iter().find(|e| e.source as usize >= n || e.target as usize >= n) {
        return Err(Error::Shape(format!("edge {e:?} outside {n} neurons")));
    }
    let connectome = Connectome {
        grid: cfg.grid,
        kind,
        edges,
        input_patch,
        pooling,
    };
    Ok((cfg, connectome))
}

pub fn write_landscape(path: &Path, landscape: &DirectionLandscape) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["neuron", "dx", "dy"])?;
    for (i, d) in landscape.directions.iter().enumerate() {
        w.write_record([i.to_string(), d.dx.to_string(), d.dy.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectome::build_network;

    #[test]
    fn roundtrip_small() {
        let mut cfg = NetworkConfig::default();
        cfg.grid = crate::connectome::GridSpec::new(20, 10).unwrap();
        cfg.connectivity.sigma_exc = 4.0;
        cfg.connectivity.sigma_inh = 3.0;
        cfg.connectivity.p_conn = 0.05;
        cfg.input.origin_x = 2;
        cfg.input.origin_y = 2;
        let net = build_network(&cfg, NetworkKind::Anisotropic).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_connectome(&p, &net.connectome, &cfg).unwrap();
        let (cfg2, c2) = read_connectome(&p).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(c2, net.connectome);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "hello\n").unwrap();
        assert!(matches!(read_connectome(&p), Err(Error::Parse { line: 1, .. })));
    }
}
