//! Waypoint files for `follow`.
//!
//! Two forms are accepted:
//!
//! * JSON, either `{"waypoints": [[x, y, …], …]}` (the `/api/follow` request
//!   body, so a saved request replays unchanged) or a bare array of points;
//! * plain text, one point per line, coordinates separated by whitespace or
//!   commas; blank lines and `#` comments are skipped.
//!
//! [`format_waypoints`] writes the JSON form.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointFile {
    pub waypoints: Vec<Vec<f64>>,
}

pub fn parse_waypoints(text: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    let trimmed = text.trim_start();
    let points = if trimmed.starts_with('{') {
        serde_json::from_str::<WaypointFile>(trimmed)
            .context("malformed waypoint file")?
            .waypoints
    } else if trimmed.starts_with('[') {
        serde_json::from_str::<Vec<Vec<f64>>>(trimmed).context("malformed waypoint file")?
    } else {
        parse_text(text)?
    };
    if points.is_empty() {
        bail!("waypoint file has no points");
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            bail!("waypoint {} has {} coordinates, robot needs {dim}", i + 1, p.len());
        }
        if p.iter().any(|v| !v.is_finite()) {
            bail!("waypoint {} is not finite", i + 1);
        }
    }
    Ok(points)
}

fn parse_text(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut points = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let point = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().with_context(|| format!("line {}: bad number {s:?}", no + 1)))
            .collect::<Result<Vec<_>>>()?;
        points.push(point);
    }
    Ok(points)
}

pub fn format_waypoints(points: &[Vec<f64>]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&WaypointFile {
        waypoints: points.to_vec(),
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_json_forms_agree() {
        let text = "# finger path\n10, 120\n\n-5.5 118 # tail\n";
        let a = parse_waypoints(text, 2).unwrap();
        assert_eq!(a, vec![vec![10.0, 120.0], vec![-5.5, 118.0]]);
        let b = parse_waypoints(&format_waypoints(&a).unwrap(), 2).unwrap();
        assert_eq!(a, b);
        let c = parse_waypoints("[[10, 120], [-5.5, 118]]", 2).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(parse_waypoints("", 2).is_err());
        assert!(parse_waypoints("1 2 3\n", 2).is_err());
        assert!(parse_waypoints("1 x\n", 2).is_err());
        assert!(parse_waypoints("{\"waypoints\": 3}", 2).is_err());
        assert!(parse_waypoints("{\"waypoints\": []}", 2).is_err());
    }

    #[test]
    fn long_trail_round_trips() {
        let trail: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 * 0.1, 100.0 + i as f64 * 0.01, 60.0]).collect();
        let text = format_waypoints(&trail).unwrap();
        assert_eq!(parse_waypoints(&text, 3).unwrap(), trail);
    }
}
