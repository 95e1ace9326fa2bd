//! Plot data for the conformal diagram: conformal time against comoving
//! distance, with Earth's worldline, source sight lines, past light cones
//! down to the hot big bang and any overlap regions.
//!
//! Sources are placed in one spatial plane at direction `alpha_deg`, so rows
//! carry (x, y, η). Sources at 0° and 180° give the familiar 1+1 picture
//! with y = 0.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::causal::{
    emission_event, lightcones_disjoint, CausalVerdict, SkyPosition, SpacetimeEvent,
};
use crate::cosmology::{conformal_time, CosmologyParams};
use crate::error::{Error, Result};

const CIRCLE_POINTS: usize = 180;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramSource {
    pub id: String,
    pub z: f64,
    pub alpha_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramRow {
    pub element: String,
    pub label: String,
    pub x_mpc: f64,
    pub y_mpc: f64,
    pub eta_mpc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalDiagram {
    pub rows: Vec<DiagramRow>,
    pub verdict: Option<CausalVerdict>,
}

impl ConformalDiagram {
    pub fn element<'a>(
        &'a self,
        element: &'a str,
        label: &'a str,
    ) -> impl Iterator<Item = &'a DiagramRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.element == element && r.label == label)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads `id,z,alpha_deg` rows.
pub fn read_sources<R: Read>(r: R) -> Result<Vec<DiagramSource>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<DiagramSource>().enumerate() {
        let s = row.map_err(|e| Error::invalid(format!("sources row {}: {e}", i + 2)))?;
        if !(s.z.is_finite() && s.z >= 0.0 && s.alpha_deg.is_finite()) {
            return Err(Error::invalid(format!(
                "sources row {}: bad z or alpha",
                i + 2
            )));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn read_sources_file(path: impl AsRef<Path>) -> Result<Vec<DiagramSource>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_sources(f)
}

fn push(rows: &mut Vec<DiagramRow>, element: &str, label: &str, p: [f64; 3]) {
    rows.push(DiagramRow {
        element: element.into(),
        label: label.into(),
        x_mpc: p[0],
        y_mpc: p[1],
        eta_mpc: p[2],
    });
}

fn circle_point(c: [f64; 2], r: f64, t: f64) -> [f64; 2] {
    [c[0] + r * t.cos(), c[1] + r * t.sin()]
}

fn inside(p: [f64; 2], c: [f64; 2], r: f64) -> bool {
    (p[0] - c[0]).hypot(p[1] - c[1]) <= r
}

/// Boundary of the intersection of two disks at η = 0, or `None` if disjoint.
fn lens(c1: [f64; 2], r1: f64, c2: [f64; 2], r2: f64) -> Option<Vec<[f64; 2]>> {
    let dist = (c1[0] - c2[0]).hypot(c1[1] - c2[1]);
    if dist >= r1 + r2 {
        return None;
    }
    let sample = |c: [f64; 2], r: f64| -> Vec<[f64; 2]> {
        (0..=CIRCLE_POINTS)
            .map(|k| circle_point(c, r, TAU * k as f64 / CIRCLE_POINTS as f64))
            .collect()
    };
    if dist + r1.min(r2) <= r1.max(r2) {
        let (c, r) = if r1 <= r2 { (c1, r1) } else { (c2, r2) };
        return Some(sample(c, r));
    }
    // Arc of each circle lying inside the other, joined at the two intersections.
    let arc = |ca: [f64; 2], ra: f64, cb: [f64; 2], rb: f64| -> Vec<[f64; 2]> {
        let base = (cb[1] - ca[1]).atan2(cb[0] - ca[0]);
        let half = ((ra * ra + dist * dist - rb * rb) / (2.0 * ra * dist))
            .clamp(-1.0, 1.0)
            .acos();
        (0..=CIRCLE_POINTS / 2)
            .map(|k| {
                let t = base - half + 2.0 * half * k as f64 / (CIRCLE_POINTS / 2) as f64;
                circle_point(ca, ra, t)
            })
            .collect()
    };
    let mut pts = arc(c1, r1, c2, r2);
    pts.extend(arc(c2, r2, c1, r1));
    if let Some(&first) = pts.first() {
        pts.push(first);
    }
    debug_assert!(pts
        .iter()
        .all(|&p| inside(p, c1, r1 * (1.0 + 1e-9)) || inside(p, c2, r2 * (1.0 + 1e-9))));
    Some(pts)
}

/// Builds the diagram; with no sources only the axes are emitted.
pub fn conformal_diagram(
    sources: &[DiagramSource],
    params: &CosmologyParams,
) -> Result<ConformalDiagram> {
    let eta0 = conformal_time(0.0, params)?;
    let mut rows = Vec::new();
    push(&mut rows, "earth_worldline", "earth", [0.0, 0.0, 0.0]);
    push(&mut rows, "earth_worldline", "earth", [0.0, 0.0, eta0]);
    push(&mut rows, "hot_big_bang", "eta0", [-eta0, 0.0, 0.0]);
    push(&mut rows, "hot_big_bang", "eta0", [eta0, 0.0, 0.0]);
    push(&mut rows, "observer_past_cone", "earth", [-eta0, 0.0, 0.0]);
    push(&mut rows, "observer_past_cone", "earth", [0.0, 0.0, eta0]);
    push(&mut rows, "observer_past_cone", "earth", [eta0, 0.0, 0.0]);
    if sources.is_empty() {
        return Ok(ConformalDiagram {
            rows,
            verdict: None,
        });
    }

    let events: Vec<SpacetimeEvent> = sources
        .iter()
        .map(|s| emission_event(s.z, &SkyPosition::wrapped(s.alpha_deg, 0.0)?, params))
        .collect::<Result<_>>()?;
    for (s, e) in sources.iter().zip(&events) {
        let [x, y, _] = e.comoving_position;
        let eta = e.conformal_time;
        let (uy, ux) = s.alpha_deg.to_radians().sin_cos();
        push(&mut rows, "emission_event", &s.id, [x, y, eta]);
        push(&mut rows, "sight_line", &s.id, [x, y, eta]);
        push(&mut rows, "sight_line", &s.id, [0.0, 0.0, eta0]);
        // Radial generators of the past cone: inner foot, apex, outer foot.
        push(
            &mut rows,
            "past_cone",
            &s.id,
            [x - eta * ux, y - eta * uy, 0.0],
        );
        push(&mut rows, "past_cone", &s.id, [x, y, eta]);
        push(
            &mut rows,
            "past_cone",
            &s.id,
            [x + eta * ux, y + eta * uy, 0.0],
        );
        for k in 0..=CIRCLE_POINTS {
            let p = circle_point([x, y], eta, TAU * k as f64 / CIRCLE_POINTS as f64);
            push(&mut rows, "cone_base", &s.id, [p[0], p[1], 0.0]);
        }
        let depth = eta - e.distance_from_earth();
        if depth > 0.0 {
            push(&mut rows, "earth_overlap", &s.id, [0.0, 0.0, 0.0]);
            push(&mut rows, "earth_overlap", &s.id, [0.0, 0.0, depth]);
        }
    }
    for i in 0..events.len() {
        for j in i + 1..events.len() {
            let ci = [
                events[i].comoving_position[0],
                events[i].comoving_position[1],
            ];
            let cj = [
                events[j].comoving_position[0],
                events[j].comoving_position[1],
            ];
            if let Some(pts) = lens(ci, events[i].conformal_time, cj, events[j].conformal_time) {
                let label = format!("{}|{}", sources[i].id, sources[j].id);
                for p in pts {
                    push(&mut rows, "overlap", &label, [p[0], p[1], 0.0]);
                }
            }
        }
    }
    Ok(ConformalDiagram {
        rows,
        verdict: Some(lightcones_disjoint(&events)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::threshold_redshift;

    fn src(id: &str, z: f64, alpha: f64) -> DiagramSource {
        DiagramSource {
            id: id.into(),
            z,
            alpha_deg: alpha,
        }
    }

    #[test]
    fn axes_only() {
        let d = conformal_diagram(&[], &CosmologyParams::default()).unwrap();
        assert!(d.verdict.is_none());
        assert!(d.rows.iter().all(
            |r| ["earth_worldline", "hot_big_bang", "observer_past_cone"]
                .contains(&r.element.as_str())
        ));
    }

    #[test]
    fn threshold_pair_touches_at_origin() {
        let p = CosmologyParams::default();
        let z = threshold_redshift(180.0, 2, &p).unwrap();
        let d = conformal_diagram(&[src("x", z, 0.0), src("y", z, 180.0)], &p).unwrap();
        let foot = |id: &str| d.element("past_cone", id).next().unwrap().clone();
        let (fx, fy) = (foot("x"), foot("y"));
        assert!(fx.x_mpc.abs() < 1e-2 && fy.x_mpc.abs() < 1e-2);
        assert!((fx.x_mpc - fy.x_mpc).abs() < 1e-2);
        assert_eq!(fx.eta_mpc, 0.0);
        assert!(d.verdict.unwrap().binding_margin().abs() < 1e-2);
    }

    #[test]
    fn low_redshift_pair_overlaps() {
        let p = CosmologyParams::default();
        let d = conformal_diagram(&[src("x", 1.0, 0.0), src("y", 1.0, 180.0)], &p).unwrap();
        assert!(d.element("overlap", "x|y").count() > 10);
        assert!(d.element("earth_overlap", "x").count() == 2);
        assert!(!d.verdict.unwrap().pairs[0].disjoint);
    }

    #[test]
    fn csv_output_has_header() {
        let d = conformal_diagram(&[], &CosmologyParams::default()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("element,label,x_mpc,y_mpc,eta_mpc\n"));
    }
}
