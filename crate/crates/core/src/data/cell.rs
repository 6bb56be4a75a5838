use super::load::parse_date;
use super::ColumnType;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

/// A single typed value. Dates are seconds since the Unix epoch (UTC).
///
/// Cells have a total order (missing < numbers < dates < text) so they can key
/// ordered maps during group-by.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "t", content = "v", rename_all = "lowercase")]
pub enum Cell {
    Missing,
    Num(f64),
    Date(i64),
    Text(String),
}

const MISSING_TOKENS: [&str; 5] = ["", "na", "n/a", "null", "nan"];

pub(crate) fn is_missing_token(raw: &str) -> bool {
    let t = raw.trim();
    MISSING_TOKENS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

pub(crate) fn parse_number(raw: &str) -> Option<f64> {
    let v: f64 = raw.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

impl Cell {
    /// Parses raw text under a known column type; unparseable text becomes missing
    /// for quantitative and temporal columns.
    pub fn parse_as(raw: &str, ctype: ColumnType) -> Cell {
        if is_missing_token(raw) {
            return Cell::Missing;
        }
        match ctype {
            ColumnType::Quantitative => parse_number(raw).map_or(Cell::Missing, Cell::Num),
            ColumnType::Temporal => parse_date(raw).map_or(Cell::Missing, Cell::Date),
            ColumnType::Nominal => Cell::Text(raw.trim().to_string()),
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    /// Numeric view: numbers as-is, dates as epoch seconds.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Date(s) => Some(*s as f64),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Cell::Missing => 0,
            Cell::Num(_) => 1,
            Cell::Date(_) => 2,
            Cell::Text(_) => 3,
        }
    }
}

fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0.0f64.to_bits()
    } else {
        v.to_bits()
    }
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Cell::Num(a), Cell::Num(b)) => {
                if a == b {
                    Ordering::Equal
                } else {
                    a.total_cmp(b)
                }
            }
            (Cell::Date(a), Cell::Date(b)) => a.cmp(b),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Cell {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Cell::Missing => {}
            Cell::Num(v) => canonical_bits(*v).hash(state),
            Cell::Date(s) => s.hash(state),
            Cell::Text(t) => t.hash(state),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Missing => Ok(()),
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Date(s) => match chrono::DateTime::from_timestamp(*s, 0) {
                Some(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%SZ")),
                None => write!(f, "{s}"),
            },
            Cell::Text(t) => f.write_str(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_order_across_kinds() {
        let mut cells = vec![
            Cell::Text("b".into()),
            Cell::Num(2.0),
            Cell::Missing,
            Cell::Date(5),
            Cell::Num(-1.0),
            Cell::Text("a".into()),
        ];
        cells.sort();
        assert_eq!(
            cells,
            vec![
                Cell::Missing,
                Cell::Num(-1.0),
                Cell::Num(2.0),
                Cell::Date(5),
                Cell::Text("a".into()),
                Cell::Text("b".into()),
            ]
        );
    }

    #[test]
    fn signed_zero_is_one_key() {
        use std::collections::HashSet;
        let set: HashSet<Cell> = [Cell::Num(0.0), Cell::Num(-0.0)].into_iter().collect();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn missing_tokens() {
        for t in ["", "  ", "NA", "n/a", "NULL", "NaN"] {
            assert!(Cell::parse_as(t, ColumnType::Nominal).is_missing(), "{t:?}");
        }
        assert_eq!(
            Cell::parse_as("abc", ColumnType::Quantitative),
            Cell::Missing
        );
    }
}
