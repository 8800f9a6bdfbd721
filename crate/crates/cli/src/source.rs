use std::path::PathBuf;

use anyhow::Result;
use fusformer::data::{read_cube, synth_cube, Cube};

/// Where a ground-truth cube comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum GtSource {
    File(PathBuf),
    Synth { seed: u64, height: usize, width: usize, bands: usize },
}

impl GtSource {
    pub fn load(&self) -> Result<Cube> {
        Ok(match self {
            GtSource::File(p) => read_cube(p)?,
            GtSource::Synth {
                seed,
                height,
                width,
                bands,
            } => synth_cube(*seed, *height, *width, *bands),
        })
    }
}

impl std::fmt::Display for GtSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GtSource::File(p) => write!(f, "{}", p.display()),
            GtSource::Synth {
                seed,
                height,
                width,
                bands,
            } => write!(f, "synth:{seed},{height},{width},{bands}"),
        }
    }
}

pub fn parse_gt(s: &str) -> std::result::Result<GtSource, String> {
    let Some(spec) = s.strip_prefix("synth:") else {
        return Ok(GtSource::File(PathBuf::from(s)));
    };
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || format!("expected synth:seed,H,W,S, got {s:?}");
    if parts.len() != 4 {
        return Err(bad());
    }
    let seed = parts[0].parse().map_err(|_| bad())?;
    let dims: Vec<usize> = parts[1..]
        .iter()
        .map(|p| p.parse::<usize>().ok().filter(|&v| v > 0))
        .collect::<Option<_>>()
        .ok_or_else(bad)?;
    Ok(GtSource::Synth {
        seed,
        height: dims[0],
        width: dims[1],
        bands: dims[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_forms() {
        assert_eq!(
            parse_gt("synth:7,96,96,31").unwrap(),
            GtSource::Synth {
                seed: 7,
                height: 96,
                width: 96,
                bands: 31
            }
        );
        assert_eq!(parse_gt("a/b.hsc").unwrap(), GtSource::File("a/b.hsc".into()));
        assert!(parse_gt("synth:1,2,3").is_err());
        assert!(parse_gt("synth:1,0,3,4").is_err());
        assert_eq!(parse_gt("synth:1,2,3,4").unwrap().to_string(), "synth:1,2,3,4");
    }
}
