use std::fs;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::broker::MarketReport;
use crate::error::{DealerError, Result};
use crate::money::Money;
use crate::rational::ExactRational;
use crate::training::Sample;
use crate::types::{valid_label, CompCurve, DataOwner, RestrictionMode, SurveyPoint};

fn parse_err(row: usize, column: &str, reason: impl Into<String>) -> DealerError {
    DealerError::ParseError {
        row,
        column: column.to_string(),
        reason: reason.into(),
    }
}

fn parse_f64(row: usize, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| parse_err(row, column, format!("not a number: '{raw}'")))?;
    if !v.is_finite() {
        return Err(parse_err(row, column, "non-finite value"));
    }
    Ok(v)
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path)?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Reads owners from a delimited file with header
/// f0,...,f{d-1},label,eps_prefer,curve,rho,mode.
pub fn ingest_dataset(path: &Path) -> Result<Vec<DataOwner>> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(0, "header", e.to_string()))?
        .clone();
    let d = headers.iter().take_while(|h| h.starts_with('f')).count();
    let expected = d + 5;
    if d == 0 || headers.len() != expected {
        return Err(parse_err(
            0,
            "header",
            "expected f0..f{d-1},label,eps_prefer,curve,rho,mode",
        ));
    }
    let mut owners = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, "-", e.to_string()))?;
        if record.len() != expected {
            return Err(parse_err(row, "-", "wrong number of fields"));
        }
        let features: Vec<f64> = (0..d)
            .map(|j| parse_f64(row, &headers[j], &record[j]))
            .collect::<Result<_>>()?;
        let label = parse_f64(row, "label", &record[d])?;
        if !valid_label(label) {
            return Err(DealerError::InvalidLabel {
                id: row as u32,
                label,
            });
        }
        let eps_prefer = parse_f64(row, "eps_prefer", &record[d + 1])?;
        let curve = CompCurve::parse(&record[d + 2])
            .ok_or_else(|| parse_err(row, "curve", format!("unknown curve '{}'", &record[d + 2])))?;
        let rho = parse_f64(row, "rho", &record[d + 3])?;
        let restriction_mode = RestrictionMode::parse(&record[d + 4])
            .ok_or_else(|| parse_err(row, "mode", format!("unknown mode '{}'", &record[d + 4])))?;
        let owner = DataOwner {
            id: row as u32,
            features,
            label,
            eps_prefer,
            curve,
            rho,
            restriction_mode,
        };
        owner.validate()?;
        owners.push(owner);
    }
    Ok(owners)
}

pub fn write_dataset(path: &Path, owners: &[DataOwner]) -> Result<()> {
    let d = owners.first().map(|o| o.features.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.extend(["label", "eps_prefer", "curve", "rho", "mode"].map(String::from));
    w.write_record(&header)?;
    for o in owners {
        let mut row: Vec<String> = o.features.iter().map(|x| format!("{x}")).collect();
        row.push(format!("{}", o.label));
        row.push(format!("{}", o.eps_prefer));
        row.push(o.curve.name().to_string());
        row.push(format!("{}", o.rho));
        row.push(o.restriction_mode.name().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads labeled evaluation samples from a file with header f0,...,label.
pub fn ingest_eval(path: &Path) -> Result<Vec<Sample>> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(0, "header", e.to_string()))?
        .clone();
    let d = headers.iter().take_while(|h| h.starts_with('f')).count();
    if d == 0 || headers.len() != d + 1 {
        return Err(parse_err(0, "header", "expected f0..f{d-1},label"));
    }
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, "-", e.to_string()))?;
        if record.len() != d + 1 {
            return Err(parse_err(row, "-", "wrong number of fields"));
        }
        let features: Vec<f64> = (0..d)
            .map(|j| parse_f64(row, &headers[j], &record[j]))
            .collect::<Result<_>>()?;
        let label = parse_f64(row, "label", &record[d])?;
        samples.push((features, label));
    }
    Ok(samples)
}

pub fn write_eval(path: &Path, samples: &[Sample]) -> Result<()> {
    let d = samples.first().map(|s| s.0.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (x, y) in samples {
        let mut row: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
        row.push(format!("{y}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads survey points from a file with header target_model,bid_minor,bid.
pub fn ingest_survey(path: &Path) -> Result<Vec<SurveyPoint>> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(0, "header", e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "target_model" || &headers[1] != "bid_minor" {
        return Err(parse_err(0, "header", "expected target_model,bid_minor[,bid]"));
    }
    let mut survey = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, "-", e.to_string()))?;
        let target_model: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(row, "target_model", "not an integer"))?;
        let bid_minor: u64 = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(row, "bid_minor", "not an integer"))?;
        survey.push(SurveyPoint {
            target_model,
            bid: Money::from_minor(bid_minor),
        });
    }
    Ok(survey)
}

pub fn write_survey(path: &Path, survey: &[SurveyPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["target_model", "bid_minor", "bid"])?;
    for p in survey {
        w.write_record([
            p.target_model.to_string(),
            p.bid.minor().to_string(),
            p.bid.display(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurveyKind {
    IndependentUniform,
    GaussianCounts,
}

impl SurveyKind {
    pub fn parse(s: &str) -> Option<SurveyKind> {
        match s.to_ascii_lowercase().as_str() {
            "independent-uniform" | "uniform" => Some(SurveyKind::IndependentUniform),
            "gaussian-counts" | "gaussian" => Some(SurveyKind::GaussianCounts),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurveyKind::IndependentUniform => "independent-uniform",
            SurveyKind::GaussianCounts => "gaussian-counts",
        }
    }
}

/// Tier-m bids are uniform whole-unit amounts in
/// [1000 + 100(m-1), 5000 + 100(m-1)].
fn draw_bid(rng: &mut ChaCha8Rng, tier: usize) -> Money {
    let shift = 100 * (tier as u64 - 1);
    Money::from_major(rng.gen_range(1000 + shift..=5000 + shift))
}

/// Synthetic demand survey. IndependentUniform draws each buyer's target
/// tier uniformly ("independent random distribution" of counts read as
/// uniform); GaussianCounts splits `total` proportionally to Normal(5,3)
/// draws clipped at zero, using largest remainders so the counts sum to
/// `total` exactly.
pub fn generate_survey(
    kind: SurveyKind,
    tier_count: usize,
    total: usize,
    seed: u64,
) -> Vec<SurveyPoint> {
    assert!(tier_count >= 1 && total >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts: Vec<usize> = match kind {
        SurveyKind::IndependentUniform => {
            let mut counts = vec![0usize; tier_count];
            for _ in 0..total {
                counts[rng.gen_range(0..tier_count)] += 1;
            }
            counts
        }
        SurveyKind::GaussianCounts => {
            let normal: Normal<f64> = Normal::new(5.0, 3.0).unwrap();
            let mut draws: Vec<f64> = (0..tier_count)
                .map(|_| normal.sample(&mut rng).max(0.0))
                .collect();
            if draws.iter().sum::<f64>() <= 0.0 {
                draws = vec![1.0; tier_count];
            }
            largest_remainder(&draws, total)
        }
    };
    let mut survey = Vec::with_capacity(total);
    for (m, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            survey.push(SurveyPoint {
                target_model: m + 1,
                bid: draw_bid(&mut rng, m + 1),
            });
        }
    }
    survey
}

/// Integer apportionment of `total` proportional to non-negative weights.
fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut leftover = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut k = 0;
    while leftover > 0 {
        counts[order[k % order.len()]] += 1;
        leftover -= 1;
        k += 1;
    }
    counts
}

/// Two Gaussian blobs at +/- `separation` along every axis with labels +/-1,
/// plus randomized compensation terms. Owner ids are 1-based row numbers.
pub fn generate_dataset(
    n: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Vec<DataOwner> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let curves = [CompCurve::Linear, CompCurve::Convex, CompCurve::Concave];
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let features = (0..d)
                .map(|_| label * separation + noise.sample(&mut rng))
                .collect();
            DataOwner {
                id: i as u32 + 1,
                features,
                label,
                eps_prefer: rng.gen_range(0.5..2.0),
                curve: curves[i % curves.len()],
                rho: rng.gen_range(0.0..0.5),
                restriction_mode: RestrictionMode::Negotiable,
            }
        })
        .collect()
}

/// Held-out samples from the same two-blob distribution.
pub fn generate_eval(n: usize, d: usize, separation: f64, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let features = (0..d)
                .map(|_| label * separation + noise.sample(&mut rng))
                .collect();
            (features, label)
        })
        .collect()
}

fn rational_cols(r: ExactRational) -> [String; 3] {
    [
        r.numerator().to_string(),
        r.denominator().to_string(),
        format!("{:.2}", r.to_f64() / 100.0),
    ]
}

/// Writes report.json plus plot-ready prices.csv and compensation.csv.
/// Exact amounts appear as integer minor units (or numerator/denominator
/// pairs for prices) next to a rounded display string.
pub fn emit_report(report: &MarketReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report).expect("report serialization");
    fs::write(dir.join("report.json"), json + "\n")?;

    let mut w = csv::Writer::from_path(dir.join("prices.csv"))?;
    w.write_record([
        "tier",
        "epsilon",
        "price_num",
        "price_den",
        "price",
        "revenue_num",
        "revenue_den",
        "revenue",
        "zero_demand",
        "pool_minor",
        "pool",
    ])?;
    for (i, tier) in report.tiers.iter().enumerate() {
        let mut row = vec![tier.tier_index.to_string(), format!("{}", tier.epsilon)];
        row.extend(rational_cols(report.prices[i]));
        row.extend(rational_cols(report.tier_revenue[i]));
        row.push(report.zero_demand[i].to_string());
        row.push(report.tier_pools[i].minor().to_string());
        row.push(report.tier_pools[i].display());
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("compensation.csv"))?;
    w.write_record([
        "owner_id",
        "total_minor",
        "total",
        "committed_base_minor",
        "committed_base",
        "committed_extra_minor",
        "committed_extra",
    ])?;
    for rec in &report.compensation {
        w.write_record([
            rec.owner_id.to_string(),
            rec.total.minor().to_string(),
            rec.total.display(),
            rec.committed_base.minor().to_string(),
            rec.committed_base.display(),
            rec.committed_extra.minor().to_string(),
            rec.committed_extra.display(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses prices.csv back into (tier, exact price, exact revenue) rows.
pub fn ingest_price_table(path: &Path) -> Result<Vec<(usize, ExactRational, ExactRational)>> {
    let mut rdr = reader(path)?;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, "-", e.to_string()))?;
        let tier: usize = record[0]
            .parse()
            .map_err(|_| parse_err(row, "tier", "not an integer"))?;
        let rat = |n: &str, d: &str, col: &str| -> Result<ExactRational> {
            let n: i128 = n.parse().map_err(|_| parse_err(row, col, "bad numerator"))?;
            let d: i128 = d
                .parse()
                .map_err(|_| parse_err(row, col, "bad denominator"))?;
            Ok(ExactRational::new(n, d))
        };
        rows.push((
            tier,
            rat(&record[2], &record[3], "price")?,
            rat(&record[5], &record[6], "revenue")?,
        ));
    }
    Ok(rows)
}

/// Parses compensation.csv back into (owner, total, committed base+extra).
pub fn ingest_compensation_table(path: &Path) -> Result<Vec<(u32, Money, Money, Money)>> {
    let mut rdr = reader(path)?;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_err(row, "-", e.to_string()))?;
        let int = |raw: &str, col: &str| -> Result<u64> {
            raw.parse().map_err(|_| parse_err(row, col, "not an integer"))
        };
        rows.push((
            int(&record[0], "owner_id")? as u32,
            Money::from_minor(int(&record[1], "total_minor")?),
            Money::from_minor(int(&record[3], "committed_base_minor")?),
            Money::from_minor(int(&record[5], "committed_extra_minor")?),
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn dataset_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("owners.csv");
        let owners = generate_dataset(8, 3, 1.0, 42);
        write_dataset(&path, &owners).unwrap();
        let back = ingest_dataset(&path).unwrap();
        assert_eq!(owners, back);
    }

    #[test]
    fn three_row_file_yields_three_owners() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("owners.csv");
        fs::write(
            &path,
            "f0,f1,label,eps_prefer,curve,rho,mode\n\
             0.5,0.5,1,1.0,linear,0.1,hard\n\
             -0.5,0.1,-1,2.0,convex,0.2,negotiable\n\
             0.2,-0.3,1,0.5,concave,0,hard\n",
        )
        .unwrap();
        let owners = ingest_dataset(&path).unwrap();
        assert_eq!(owners.len(), 3);
        assert_eq!(owners[1].curve, CompCurve::Convex);
        assert_eq!(owners[2].id, 3);
    }

    #[test]
    fn bad_label_reported_at_its_row() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("owners.csv");
        fs::write(
            &path,
            "f0,label,eps_prefer,curve,rho,mode\n\
             0.5,1,1.0,linear,0.1,hard\n\
             0.5,2,1.0,linear,0.1,hard\n",
        )
        .unwrap();
        match ingest_dataset(&path) {
            Err(DealerError::InvalidLabel { id, label }) => {
                assert_eq!(id, 2);
                assert_eq!(label, 2.0);
            }
            other => panic!("expected InvalidLabel, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_header_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("owners.csv");
        fs::write(&path, "").unwrap();
        match ingest_dataset(&path) {
            Err(DealerError::ParseError { row, column, .. }) => {
                assert_eq!(row, 0);
                assert_eq!(column, "header");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn nan_features_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("owners.csv");
        fs::write(
            &path,
            "f0,label,eps_prefer,curve,rho,mode\nNaN,1,1.0,linear,0.1,hard\n",
        )
        .unwrap();
        assert!(matches!(
            ingest_dataset(&path),
            Err(DealerError::ParseError { row: 1, .. })
        ));
    }

    #[test]
    fn survey_generation_respects_tier_ranges() {
        for kind in [SurveyKind::IndependentUniform, SurveyKind::GaussianCounts] {
            let survey = generate_survey(kind, 10, 100, 5);
            assert_eq!(survey.len(), 100);
            for p in &survey {
                assert!((1..=10).contains(&p.target_model));
                let shift = 100 * (p.target_model as u64 - 1);
                let lo = Money::from_major(1000 + shift);
                let hi = Money::from_major(5000 + shift);
                assert!(p.bid >= lo && p.bid <= hi);
                assert_eq!(p.bid.minor() % 100, 0, "whole-unit bids only");
            }
        }
    }

    #[test]
    fn survey_generation_is_seed_deterministic() {
        let a = generate_survey(SurveyKind::GaussianCounts, 5, 40, 9);
        let b = generate_survey(SurveyKind::GaussianCounts, 5, 40, 9);
        assert_eq!(a, b);
        let single = generate_survey(SurveyKind::IndependentUniform, 3, 1, 9);
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn survey_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("survey.csv");
        let survey = generate_survey(SurveyKind::IndependentUniform, 4, 25, 3);
        write_survey(&path, &survey).unwrap();
        assert_eq!(ingest_survey(&path).unwrap(), survey);
    }

    #[test]
    fn eval_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        let eval = generate_eval(10, 4, 1.0, 7);
        write_eval(&path, &eval).unwrap();
        assert_eq!(ingest_eval(&path).unwrap(), eval);
    }

    #[test]
    fn largest_remainder_is_exact_and_deterministic() {
        let counts = largest_remainder(&[1.0, 1.0, 1.0], 100);
        assert_eq!(counts.iter().sum::<usize>(), 100);
        assert_eq!(counts, vec![34, 33, 33]);
        let counts = largest_remainder(&[0.0, 3.0], 7);
        assert_eq!(counts, vec![0, 7]);
    }
}
