use std::io::Read;
use std::path::Path;

use crate::error::{Error, Location, Result};
use crate::model::{LabeledDataset, OneHotLabels};

const FEATURES: usize = 4;

/// Loads a four-feature CSV with the species name in the fifth column.
///
/// Header rows (no numeric feature fields) are skipped wherever they
/// appear. Each feature column is min-max scaled to `[0, 1]`; species are
/// numbered in sorted name order.
pub fn load_iris_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_iris_csv(file, "iris")
}

pub fn parse_iris_csv<R: Read>(mut input: R, name: &str) -> Result<LabeledDataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    // Line numbers from byte offsets; the reader's own count skips blank lines.
    let line_at = |p: Option<&csv::Position>| {
        p.map_or(Location::Unknown, |p| {
            let mut at = (p.byte() as usize).min(bytes.len());
            while at < bytes.len() && matches!(bytes[at], b'\n' | b'\r') {
                at += 1;
            }
            Location::Line(1 + bytes[..at].iter().filter(|&&b| b == b'\n').count())
        })
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut rows: Vec<([f64; FEATURES], String)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(line_at(e.position()), e.to_string()))?;
        let line = line_at(record.position());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().take(FEATURES).map(|f| f.parse::<f64>().ok()).collect();
        if parsed.iter().all(Option::is_none) {
            continue;
        }
        if record.len() != FEATURES + 1 {
            return Err(Error::format(line, format!("expected {} fields, found {}", FEATURES + 1, record.len())));
        }
        let mut features = [0.0; FEATURES];
        for (j, (slot, value)) in features.iter_mut().zip(&parsed).enumerate() {
            *slot = value
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::format(line, format!("field {} `{}` is not a finite number", j + 1, &record[j])))?;
        }
        let species = &record[FEATURES];
        if species.is_empty() {
            return Err(Error::format(line, "missing species"));
        }
        rows.push((features, species.to_string()));
    }
    if rows.is_empty() {
        return Err(Error::format(Location::Unknown, "no data rows"));
    }
    let mut species: Vec<&str> = rows.iter().map(|(_, s)| s.as_str()).collect();
    species.sort_unstable();
    species.dedup();
    if species.len() < 2 {
        return Err(Error::format(Location::Unknown, "need at least two species"));
    }
    let mut lo = [f64::INFINITY; FEATURES];
    let mut hi = [f64::NEG_INFINITY; FEATURES];
    for (f, _) in &rows {
        for j in 0..FEATURES {
            lo[j] = lo[j].min(f[j]);
            hi[j] = hi[j].max(f[j]);
        }
    }
    let mut features = Vec::with_capacity(rows.len() * FEATURES);
    for (f, _) in &rows {
        for j in 0..FEATURES {
            let span = hi[j] - lo[j];
            features.push(if span > 0.0 { (f[j] - lo[j]) / span } else { 0.0 });
        }
    }
    let labels = rows
        .iter()
        .map(|(_, s)| species.binary_search(&s.as_str()).expect("species collected above"))
        .collect();
    let labels = OneHotLabels::from_indices(species.len(), labels)?;
    LabeledDataset::new(name, features, vec![FEATURES], labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "sepal_length,sepal_width,petal_length,petal_width,species
5.1,3.5,1.4,0.2,setosa
7.0,3.2,4.7,1.4,versicolor
sepal_length,sepal_width,petal_length,petal_width,species
6.3,3.3,6.0,2.5,virginica
4.9,3.0,1.4,0.2,setosa
";

    #[test]
    fn parses_and_normalizes() {
        let d = parse_iris_csv(SAMPLE.as_bytes(), "s").unwrap();
        assert_eq!((d.len(), d.feature_len(), d.classes()), (4, 4, 3));
        assert_eq!(d.labels().indices(), &[0, 1, 2, 0]);
        for j in 0..4 {
            let col: Vec<f64> = (0..4).map(|i| d.sample(i)[j]).collect();
            assert_eq!(col.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
            assert_eq!(col.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
        assert_eq!(d.sample(0)[0], (5.1 - 4.9) / (7.0 - 4.9));
    }

    #[test]
    fn malformed_rows_report_line() {
        let bad = "sepal_length,sepal_width,petal_length,petal_width,species\n5.1,3.5,1.4,0.2,setosa\n5.1,x,1.4,0.2,setosa\n";
        match parse_iris_csv(bad.as_bytes(), "b").unwrap_err() {
            Error::Format { location, .. } => assert_eq!(location, Location::Line(3)),
            e => panic!("{e}"),
        }
        let short = "5.1,3.5,1.4,0.2,setosa\n\n6.1,3.5,1.4,versicolor\n";
        assert!(matches!(
            parse_iris_csv(short.as_bytes(), "b"),
            Err(Error::Format { location: Location::Line(3), .. })
        ));
        assert!(parse_iris_csv("5.1,3.5,1.4,0.2,setosa\n".as_bytes(), "one").is_err());
    }

    #[test]
    fn bundled_file() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris/iris.csv");
        let d = load_iris_csv(path).unwrap();
        assert_eq!((d.len(), d.feature_len(), d.classes()), (150, 4, 3));
        assert_eq!(d.labels().class_counts(), vec![50, 50, 50]);
        assert!(d.features().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
