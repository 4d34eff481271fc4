//! Versioned text checkpoints: the network spec echoed as text plus every
//! named parameter matrix at 17 significant digits, enough for `f64` values
//! to round-trip bit-identically.

use super::{
    Activation, LayerSpec, ModelGeometry, Network, NetworkError, NetworkSpec,
};
use crate::autodiff::{Matrix, Param, ParamStore};
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &str = "pgnniv-checkpoint v1";

/// Serializes the network (spec echo plus parameters) to a string.
pub fn to_string(network: &Network) -> String {
    let mut out = String::new();
    let spec = network.spec();
    out.push_str(MAGIC);
    out.push('\n');
    writeln!(out, "input_size {}", spec.input_size).unwrap();
    for layer in &spec.layers {
        match layer {
            LayerSpec::Dense { size, activation, positive_init } => {
                let act = match activation {
                    Activation::Linear => "linear",
                    Activation::Relu => "relu",
                };
                writeln!(out, "layer dense {size} {act} positive_init={}", u8::from(*positive_init))
                    .unwrap();
            }
            LayerSpec::HazenWilliams(g) => {
                writeln!(out, "layer hazen_williams {}", geometry_fields(g)).unwrap();
            }
            LayerSpec::DarcyWeisbach(g) => {
                writeln!(out, "layer darcy_weisbach {}", geometry_fields(g)).unwrap();
            }
            LayerSpec::LengthWeightedSum { length_cols } => {
                writeln!(out, "layer length_weighted_sum l1={} l2={}", length_cols.0, length_cols.1)
                    .unwrap();
            }
        }
    }
    for &pil in &spec.pil_layers {
        writeln!(out, "pil {pil}").unwrap();
    }
    for param in network.params().iter() {
        let (rows, cols) = param.shape();
        writeln!(out, "param {} {rows} {cols}", param.id()).unwrap();
        for r in 0..rows {
            let line: Vec<String> =
                (0..cols).map(|c| format!("{:.16e}", param.value()[(r, c)])).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

fn geometry_fields(g: &ModelGeometry) -> String {
    format!(
        "sigma1={:.16e} sigma2={:.16e} delta1={:.16e} delta2={:.16e} rho={:.16e} g={:.16e} scale1={:.16e} scale2={:.16e} scale3={:.16e}",
        g.sigma1, g.sigma2, g.delta1, g.delta2, g.rho, g.g,
        g.lambda_scales[0], g.lambda_scales[1], g.lambda_scales[2]
    )
}

pub fn save(network: &Network, path: &Path) -> Result<(), NetworkError> {
    std::fs::write(path, to_string(network))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Network, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    from_string(&text)
}

/// Parses a checkpoint. Errors carry the 1-based line number.
pub fn from_string(text: &str) -> Result<Network, NetworkError> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, reason: &str| NetworkError::CheckpointFormat {
        line: line + 1,
        reason: reason.to_string(),
    };

    let (line_no, first) = lines.next().ok_or_else(|| err(0, "empty file"))?;
    if first.trim() != MAGIC {
        return Err(err(line_no, "missing checkpoint header"));
    }

    let mut input_size = None;
    let mut layers = Vec::new();
    let mut pil_layers = Vec::new();
    let mut params = ParamStore::new();
    let mut saw_end = false;

    while let Some((line_no, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        match words.next() {
            Some("input_size") => {
                let v = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| err(line_no, "input_size needs an integer"))?;
                input_size = Some(v);
            }
            Some("layer") => {
                layers.push(parse_layer(line_no, &mut words)?);
            }
            Some("pil") => {
                let v = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| err(line_no, "pil needs an integer index"))?;
                pil_layers.push(v);
            }
            Some("param") => {
                let name = words.next().ok_or_else(|| err(line_no, "param needs a name"))?;
                let rows = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| err(line_no, "param needs a row count"))?;
                let cols = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| err(line_no, "param needs a column count"))?;
                let mut value = Matrix::zeros((rows, cols));
                for r in 0..rows {
                    let (row_no, row_line) =
                        lines.next().ok_or_else(|| err(line_no, "truncated param block"))?;
                    let entries: Vec<&str> = row_line.split_whitespace().collect();
                    if entries.len() != cols {
                        return Err(err(
                            row_no,
                            &format!("expected {cols} entries, found {}", entries.len()),
                        ));
                    }
                    for (c, entry) in entries.iter().enumerate() {
                        value[(r, c)] = entry
                            .parse::<f64>()
                            .map_err(|_| err(row_no, &format!("bad float {entry:?}")))?;
                    }
                }
                params.insert(Param::new(name, value));
            }
            Some("end") => {
                saw_end = true;
                break;
            }
            Some(other) => return Err(err(line_no, &format!("unknown directive {other:?}"))),
            None => unreachable!("empty lines are skipped"),
        }
    }
    if !saw_end {
        return Err(err(text.lines().count(), "missing end marker"));
    }
    let input_size = input_size.ok_or_else(|| err(0, "missing input_size"))?;
    let spec = NetworkSpec { input_size, layers, pil_layers };
    Network::from_parts(spec, params)
}

fn parse_layer<'a>(
    line_no: usize,
    words: &mut impl Iterator<Item = &'a str>,
) -> Result<LayerSpec, NetworkError> {
    let err = |reason: String| NetworkError::CheckpointFormat { line: line_no + 1, reason };
    match words.next() {
        Some("dense") => {
            let size = words
                .next()
                .and_then(|w| w.parse::<usize>().ok())
                .ok_or_else(|| err("dense layer needs a size".into()))?;
            let activation = match words.next() {
                Some("linear") => Activation::Linear,
                Some("relu") => Activation::Relu,
                other => return Err(err(format!("unknown activation {other:?}"))),
            };
            let positive_init = match words.next() {
                Some("positive_init=1") => true,
                Some("positive_init=0") | None => false,
                other => return Err(err(format!("unknown dense flag {other:?}"))),
            };
            Ok(LayerSpec::Dense { size, activation, positive_init })
        }
        Some(kind @ ("hazen_williams" | "darcy_weisbach")) => {
            let mut fields = std::collections::BTreeMap::new();
            for word in words {
                let (key, value) = word
                    .split_once('=')
                    .ok_or_else(|| err(format!("bad model field {word:?}")))?;
                let value: f64 =
                    value.parse().map_err(|_| err(format!("bad float in {word:?}")))?;
                fields.insert(key.to_string(), value);
            }
            let get = |key: &str| {
                fields
                    .get(key)
                    .copied()
                    .ok_or_else(|| err(format!("model layer missing field {key}")))
            };
            let geom = ModelGeometry {
                sigma1: get("sigma1")?,
                sigma2: get("sigma2")?,
                delta1: get("delta1")?,
                delta2: get("delta2")?,
                rho: get("rho")?,
                g: get("g")?,
                lambda_scales: [get("scale1")?, get("scale2")?, get("scale3")?],
            };
            Ok(if kind == "hazen_williams" {
                LayerSpec::HazenWilliams(geom)
            } else {
                LayerSpec::DarcyWeisbach(geom)
            })
        }
        Some("length_weighted_sum") => {
            let mut l1 = None;
            let mut l2 = None;
            for word in words {
                if let Some(v) = word.strip_prefix("l1=") {
                    l1 = v.parse::<usize>().ok();
                } else if let Some(v) = word.strip_prefix("l2=") {
                    l2 = v.parse::<usize>().ok();
                }
            }
            match (l1, l2) {
                (Some(a), Some(b)) => Ok(LayerSpec::LengthWeightedSum { length_cols: (a, b) }),
                _ => Err(err("length_weighted_sum needs l1= and l2=".into())),
            }
        }
        other => Err(err(format!("unknown layer kind {other:?}"))),
    }
}
