use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{evaluate_scenario, EvalContext, EvalError, EvalScenario, PoolSource};
use crate::scorer::{ScoreError, Scorer};

/// One point of a held-out scenario curve. `metrics` is absent when the
/// subset had no usable scorer or its evaluation was invalid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub subset_id: String,
    pub metrics: Option<BTreeMap<String, f64>>,
}

/// Builds the scorer for a subset's configuration.
pub type ScorerFactory<'a> = dyn Fn(&str) -> Result<Box<dyn Scorer>, ScoreError> + 'a;

/// Evaluate the held-out scenario once per training subset, in order.
pub fn heldout_scenario_run(
    ctx: &EvalContext<'_>,
    subsets: &[String],
    held_out: &EvalScenario,
    scorer_for: &ScorerFactory<'_>,
    pool: &PoolSource<'_>,
    seed: u64,
) -> Result<Vec<CurvePoint>, EvalError> {
    let mut points = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let metrics = match scorer_for(subset) {
            Err(e) => {
                log::warn!("subset {subset}: no scorer ({e}), point left absent");
                None
            }
            Ok(scorer) => {
                let e = evaluate_scenario(ctx, held_out, scorer.as_ref(), pool, seed)?;
                if e.is_valid() {
                    Some(e.report.metrics())
                } else {
                    log::warn!("subset {subset}: evaluation invalid, point left absent");
                    None
                }
            }
        };
        points.push(CurvePoint {
            subset_id: subset.clone(),
            metrics,
        });
    }
    Ok(points)
}

pub fn write_curve<W: Write>(w: &mut W, points: &[CurvePoint]) -> std::io::Result<()> {
    for p in points {
        serde_json::to_writer(&mut *w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_curve<R: BufRead>(r: R) -> std::io::Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A line chart of one metric across subsets. Absent points break the line.
pub fn render_curve_svg(points: &[CurvePoint], metric: &str) -> String {
    let (w, h, pad) = (640.0, 360.0, 48.0);
    let values: Vec<Option<f64>> = points
        .iter()
        .map(|p| p.metrics.as_ref().and_then(|m| m.get(metric).copied()))
        .collect();
    let top = values.iter().flatten().fold(0.0f64, |a, &b| a.max(b)).max(1e-9);
    let x = |i: usize| {
        if points.len() <= 1 {
            w / 2.0
        } else {
            pad + (w - 2.0 * pad) * i as f64 / (points.len() - 1) as f64
        }
    };
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v / top;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{0}" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(
        svg,
        r#"<text x="{pad}" y="{}" >{}</text>"#,
        pad - 16.0,
        escape(metric)
    );
    let _ = writeln!(svg, r#"<text x="4" y="{}">{top:.3}</text>"#, pad + 4.0);

    let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
    for (i, v) in values.iter().enumerate() {
        match v {
            Some(v) => runs.last_mut().expect("non-empty").push((x(i), y(*v))),
            None => runs.push(Vec::new()),
        }
    }
    for run in runs.iter().filter(|r| r.len() > 1) {
        let pts: Vec<String> = run.iter().map(|(a, b)| format!("{a:.1},{b:.1}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
    }
    for (i, (p, v)) in points.iter().zip(&values).enumerate() {
        if let Some(v) = v {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/>"#,
                x(i),
                y(*v)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x(i),
            h - pad + 16.0,
            escape(&p.subset_id)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::{AnnotationCache, Annotator, AnnotatorConfig, DeterministicTeacher, PromptSet};
    use crate::eval::EvalOptions;
    use crate::scorer::{LexicalScorer, OracleScorer};
    use crate::synth::{synthetic_dataset, SynthConfig};
    use crate::templates::builtin_registry;

    fn run(factory: &ScorerFactory<'_>) -> Vec<CurvePoint> {
        let data = synthetic_dataset(&SynthConfig {
            users: 20,
            ..Default::default()
        });
        let registry = builtin_registry().unwrap();
        let cache = AnnotationCache::in_memory();
        let prompts = PromptSet::builtin();
        let annotator = Annotator::new(
            &DeterministicTeacher,
            &cache,
            &prompts,
            AnnotatorConfig::default(),
        );
        let options = EvalOptions::default();
        let ctx =
            EvalContext::new(&data.catalog, &data.split, &registry, Some(&annotator), &options).unwrap();
        let subsets: Vec<String> = ["pref", "pref+intent", "pref+intent+comb", "all"]
            .map(String::from)
            .to_vec();
        let scenario = EvalScenario::new("P1-I0-T3".parse().unwrap()).with_template("pref-07");
        heldout_scenario_run(&ctx, &subsets, &scenario, factory, &PoolSource::default(), 5).unwrap()
    }

    #[test]
    fn one_point_per_subset_in_order() {
        let points = run(&|_| Ok(Box::new(LexicalScorer)));
        assert_eq!(points.len(), 4);
        assert_eq!(points[2].subset_id, "pref+intent+comb");
        assert!(points.windows(2).all(|w| w[0].metrics == w[1].metrics));
    }

    #[test]
    fn missing_scorers_leave_gaps() {
        let points = run(&|s| {
            if s == "pref+intent" {
                Err(ScoreError::MissingFixture(s.into()))
            } else {
                Ok(Box::new(OracleScorer::perfect()))
            }
        });
        assert!(points[1].metrics.is_none());
        assert_eq!(points[3].metrics.as_ref().unwrap()["hr@1"], 1.0);

        let mut buf = Vec::new();
        write_curve(&mut buf, &points).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line
            .lines()
            .next()
            .unwrap()
            .starts_with(r#"{"subset_id":"pref","metrics":{"#));
        assert_eq!(read_curve(buf.as_slice()).unwrap(), points);

        let svg = render_curve_svg(&points, "ndcg@5");
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("pref+intent+comb"));
    }
}
