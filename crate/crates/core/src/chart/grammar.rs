//! The chart validity grammar.
//!
//! Each positional encoding gets a [`ChannelRole`] from its column type and
//! aggregate. Marks then constrain the pair of roles:
//!
//! * bar: one categorical (nominal, temporal, or binned) channel and one measure
//!   (aggregated quantitative, or a count) in either orientation. A raw nominal
//!   or temporal axis may hold at most [`MAX_BAR_CATEGORIES`] values unless a
//!   limit is set.
//! * line: x is temporal, raw quantitative or binned; y is raw quantitative or a
//!   measure, and must be a measure when x is binned.
//! * point: both channels quantitative, raw or averaged.
//! * boxplot: one raw nominal channel and one raw quantitative channel.
//! * color: optional; a raw nominal column of at most [`MAX_COLOR_CATEGORIES`]
//!   values that is not already on an axis.
//! * limit: only on bars whose categorical axis is raw nominal, without color.
//!
//! The two positional channels never share a column. Within a dashboard the key
//! column sits on exactly one positional channel and never on color.

use super::{Aggregate, ChartError, ChartSpec, Channel, Limit, Mark};
use crate::data::{ColumnType, Dataset};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const MAX_BAR_CATEGORIES: usize = 50;
pub const MAX_COLOR_CATEGORIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnMeta {
    pub ctype: ColumnType,
    pub cardinality: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct EncodingMeta {
    pub column: ColumnMeta,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRole {
    Nominal,
    Temporal,
    Binned,
    Measure,
    RawQuantitative,
    /// The aggregate is not defined for the column type.
    Invalid,
}

impl ChannelRole {
    fn of(e: EncodingMeta) -> Self {
        if e.aggregate.requires_quantitative() && e.column.ctype != ColumnType::Quantitative {
            return ChannelRole::Invalid;
        }
        match e.aggregate {
            Aggregate::None => match e.column.ctype {
                ColumnType::Quantitative => ChannelRole::RawQuantitative,
                ColumnType::Nominal => ChannelRole::Nominal,
                ColumnType::Temporal => ChannelRole::Temporal,
            },
            Aggregate::Bin => ChannelRole::Binned,
            _ => ChannelRole::Measure,
        }
    }

    fn is_categorical(self) -> bool {
        matches!(
            self,
            ChannelRole::Nominal | ChannelRole::Temporal | ChannelRole::Binned
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    AggregateRequiresQuantitative {
        channel: Channel,
        aggregate: Aggregate,
    },
    DuplicateAxisColumn,
    BarShape,
    TooManyCategories {
        channel: Channel,
        cardinality: usize,
    },
    LineX,
    LineY,
    LineBinnedNeedsAggregate,
    PointChannel {
        channel: Channel,
    },
    BoxplotShape,
    ColorNotNominal,
    ColorAggregated,
    ColorCardinality {
        cardinality: usize,
    },
    ColorDuplicatesAxis,
    LimitRequiresNominalBar,
    LimitWithColor,
    LimitZero,
    KeyPlacement {
        positional: usize,
        on_color: bool,
    },
    TooManyCharts {
        count: usize,
        max: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AggregateRequiresQuantitative { channel, aggregate } => {
                write!(f, "aggregate {aggregate} requires quantitative ({channel})")
            }
            Violation::DuplicateAxisColumn => f.write_str("x and y encode the same column"),
            Violation::BarShape => f.write_str(
                "bar needs one categorical channel and one aggregated quantitative channel",
            ),
            Violation::TooManyCategories {
                channel,
                cardinality,
            } => write!(
                f,
                "{channel} has {cardinality} categories (max {MAX_BAR_CATEGORIES} without a limit)"
            ),
            Violation::LineX => f.write_str("line x must be temporal or quantitative"),
            Violation::LineY => f.write_str("line y must be quantitative"),
            Violation::LineBinnedNeedsAggregate => {
                f.write_str("line over a binned x needs an aggregated y")
            }
            Violation::PointChannel { channel } => {
                write!(f, "point {channel} must be quantitative with aggregate none or mean")
            }
            Violation::BoxplotShape => {
                f.write_str("boxplot needs one nominal channel and one raw quantitative channel")
            }
            Violation::ColorNotNominal => f.write_str("color must be nominal"),
            Violation::ColorAggregated => f.write_str("color cannot be aggregated"),
            Violation::ColorCardinality { cardinality } => write!(
                f,
                "color has {cardinality} categories (max {MAX_COLOR_CATEGORIES})"
            ),
            Violation::ColorDuplicatesAxis => f.write_str("color repeats a positional column"),
            Violation::LimitRequiresNominalBar => {
                f.write_str("limit requires a bar with a nominal axis and a measure")
            }
            Violation::LimitWithColor => f.write_str("limit cannot be combined with color"),
            Violation::LimitZero => f.write_str("limit k must be positive"),
            Violation::KeyPlacement {
                positional,
                on_color,
            } => write!(
                f,
                "key column must be on exactly one positional channel (found {positional}, on color: {on_color})"
            ),
            Violation::TooManyCharts { count, max } => {
                write!(f, "{count} charts exceed the maximum of {max}")
            }
        }
    }
}

/// Grammar check over resolved column metadata. Pushes every violated rule.
pub(crate) fn check_parts(
    mark: Mark,
    x: EncodingMeta,
    y: EncodingMeta,
    same_axis_column: bool,
    color: Option<(EncodingMeta, bool)>,
    limit: Option<Limit>,
    out: &mut Vec<Violation>,
) {
    for (channel, e) in [(Channel::X, x), (Channel::Y, y)] {
        if e.aggregate.requires_quantitative() && e.column.ctype != ColumnType::Quantitative {
            out.push(Violation::AggregateRequiresQuantitative {
                channel,
                aggregate: e.aggregate,
            });
        }
    }
    if same_axis_column {
        out.push(Violation::DuplicateAxisColumn);
    }
    let (rx, ry) = (ChannelRole::of(x), ChannelRole::of(y));

    match mark {
        Mark::Bar => {
            let category = if rx.is_categorical() && ry == ChannelRole::Measure {
                Some((Channel::X, rx, x))
            } else if rx == ChannelRole::Measure && ry.is_categorical() {
                Some((Channel::Y, ry, y))
            } else {
                None
            };
            match category {
                None => out.push(Violation::BarShape),
                Some((channel, role, e)) => {
                    let unbounded = matches!(role, ChannelRole::Nominal | ChannelRole::Temporal);
                    if unbounded && e.column.cardinality > MAX_BAR_CATEGORIES && limit.is_none() {
                        out.push(Violation::TooManyCategories {
                            channel,
                            cardinality: e.column.cardinality,
                        });
                    }
                }
            }
        }
        Mark::Line => {
            if !matches!(
                rx,
                ChannelRole::Temporal | ChannelRole::RawQuantitative | ChannelRole::Binned
            ) {
                out.push(Violation::LineX);
            }
            if !matches!(ry, ChannelRole::RawQuantitative | ChannelRole::Measure) {
                out.push(Violation::LineY);
            } else if rx == ChannelRole::Binned && ry == ChannelRole::RawQuantitative {
                out.push(Violation::LineBinnedNeedsAggregate);
            }
        }
        Mark::Point => {
            for (channel, e) in [(Channel::X, x), (Channel::Y, y)] {
                let ok = e.column.ctype == ColumnType::Quantitative
                    && matches!(e.aggregate, Aggregate::None | Aggregate::Mean);
                if !ok {
                    out.push(Violation::PointChannel { channel });
                }
            }
        }
        Mark::Boxplot => {
            let ok = (rx == ChannelRole::Nominal && ry == ChannelRole::RawQuantitative)
                || (rx == ChannelRole::RawQuantitative && ry == ChannelRole::Nominal);
            if !ok {
                out.push(Violation::BoxplotShape);
            }
        }
    }

    if let Some((c, duplicates_axis)) = color {
        if c.column.ctype != ColumnType::Nominal {
            out.push(Violation::ColorNotNominal);
        }
        if c.aggregate != Aggregate::None {
            out.push(Violation::ColorAggregated);
        }
        if c.column.cardinality > MAX_COLOR_CATEGORIES {
            out.push(Violation::ColorCardinality {
                cardinality: c.column.cardinality,
            });
        }
        if duplicates_axis {
            out.push(Violation::ColorDuplicatesAxis);
        }
    }

    if let Some(limit) = limit {
        let nominal_bar = mark == Mark::Bar
            && ((rx == ChannelRole::Nominal && ry == ChannelRole::Measure)
                || (rx == ChannelRole::Measure && ry == ChannelRole::Nominal));
        if !nominal_bar {
            out.push(Violation::LimitRequiresNominalBar);
        }
        if color.is_some() {
            out.push(Violation::LimitWithColor);
        }
        if limit.k == 0 {
            out.push(Violation::LimitZero);
        }
    }
}

fn meta(dataset: &Dataset, column: &str) -> Result<ColumnMeta, ChartError> {
    dataset
        .column(column)
        .map(|c| ColumnMeta {
            ctype: c.ctype,
            cardinality: c.cardinality,
        })
        .ok_or_else(|| ChartError::UnknownColumn(column.to_string()))
}

/// Applies the grammar to a chart. An empty list means the chart is valid;
/// unknown columns are a structural error rather than a violation.
pub fn validate_chart(spec: &ChartSpec, dataset: &Dataset) -> Result<Vec<Violation>, ChartError> {
    let x = EncodingMeta {
        column: meta(dataset, &spec.x.column)?,
        aggregate: spec.x.aggregate,
    };
    let y = EncodingMeta {
        column: meta(dataset, &spec.y.column)?,
        aggregate: spec.y.aggregate,
    };
    let color = match &spec.color {
        None => None,
        Some(c) => Some((
            EncodingMeta {
                column: meta(dataset, &c.column)?,
                aggregate: c.aggregate,
            },
            c.column == spec.x.column || c.column == spec.y.column,
        )),
    };
    let mut out = Vec::new();
    check_parts(
        spec.mark,
        x,
        y,
        spec.x.column == spec.y.column,
        color,
        spec.limit,
        &mut out,
    );
    Ok(out)
}

pub fn check_key_placement(spec: &ChartSpec, key: &str) -> Option<Violation> {
    let positional = usize::from(spec.x.column == key) + usize::from(spec.y.column == key);
    let on_color = spec.color.as_ref().is_some_and(|c| c.column == key);
    (positional != 1 || on_color).then_some(Violation::KeyPlacement {
        positional,
        on_color,
    })
}

/// [`validate_chart`] plus the dashboard key-column rule.
pub fn validate_chart_for_key(
    spec: &ChartSpec,
    key: &str,
    dataset: &Dataset,
) -> Result<Vec<Violation>, ChartError> {
    let mut out = validate_chart(spec, dataset)?;
    out.extend(check_key_placement(spec, key));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{Encoding, Limit};
    use crate::data::load_dataset;

    fn cars_like() -> Dataset {
        let mut csv = String::from("Origin,Horsepower,Weight,Year,Name\n");
        for i in 0..60 {
            let origin = ["USA", "Europe", "Japan"][i % 3];
            csv.push_str(&format!(
                "{origin},{},{},19{:02}-01-01,car{i}\n",
                60 + i,
                2000 + 17 * i,
                70 + i % 12
            ));
        }
        load_dataset(csv.as_bytes(), "cars").unwrap()
    }

    fn check(spec: &ChartSpec) -> Vec<Violation> {
        validate_chart(spec, &cars_like()).unwrap()
    }

    #[test]
    fn nominal_bar_with_mean_is_valid() {
        let spec = ChartSpec::new(
            Mark::Bar,
            Encoding::raw("Origin"),
            Encoding::new("Horsepower", Aggregate::Mean),
        );
        assert!(check(&spec).is_empty());
    }

    #[test]
    fn mean_of_nominal_is_rejected() {
        let spec = ChartSpec::new(
            Mark::Bar,
            Encoding::raw("Horsepower"),
            Encoding::new("Origin", Aggregate::Mean),
        );
        let v = check(&spec);
        assert!(v.iter().any(|v| v.to_string().starts_with("aggregate mean requires quantitative")));
    }

    #[test]
    fn doubly_nominal_line() {
        let spec = ChartSpec::new(Mark::Line, Encoding::raw("Origin"), Encoding::raw("Name"));
        let v = check(&spec);
        assert!(v.contains(&Violation::LineX));
        assert!(v.contains(&Violation::LineY));
    }

    #[test]
    fn histogram_shapes() {
        let h = ChartSpec::new(
            Mark::Bar,
            Encoding::new("Horsepower", Aggregate::Bin),
            Encoding::new("Origin", Aggregate::Count),
        );
        assert!(check(&h).is_empty());
        let flipped = ChartSpec::new(
            Mark::Bar,
            Encoding::new("Origin", Aggregate::Count),
            Encoding::new("Horsepower", Aggregate::Bin),
        );
        assert!(check(&flipped).is_empty());
    }

    #[test]
    fn high_cardinality_bar_needs_limit() {
        let spec = ChartSpec::new(
            Mark::Bar,
            Encoding::raw("Name"),
            Encoding::new("Weight", Aggregate::Sum),
        );
        assert!(matches!(
            check(&spec)[..],
            [Violation::TooManyCategories { cardinality: 60, .. }]
        ));
        assert!(check(&spec.with_limit(Limit::top(10))).is_empty());
    }

    #[test]
    fn limit_rules() {
        let temporal = ChartSpec::new(
            Mark::Bar,
            Encoding::raw("Year"),
            Encoding::new("Weight", Aggregate::Max),
        )
        .with_limit(Limit::bottom(10));
        assert_eq!(check(&temporal), vec![Violation::LimitRequiresNominalBar]);

        let colored = ChartSpec::new(
            Mark::Bar,
            Encoding::raw("Name"),
            Encoding::new("Weight", Aggregate::Max),
        )
        .with_color(Encoding::raw("Origin"))
        .with_limit(Limit::top(10));
        assert_eq!(check(&colored), vec![Violation::LimitWithColor]);
    }

    #[test]
    fn color_rules() {
        let base = ChartSpec::new(
            Mark::Point,
            Encoding::raw("Horsepower"),
            Encoding::raw("Weight"),
        );
        assert!(check(&base.clone().with_color(Encoding::raw("Origin"))).is_empty());
        assert_eq!(
            check(&base.clone().with_color(Encoding::raw("Name"))),
            vec![Violation::ColorCardinality { cardinality: 60 }]
        );
        assert_eq!(
            check(&base.with_color(Encoding::raw("Year"))),
            vec![
                Violation::ColorNotNominal,
                Violation::ColorCardinality { cardinality: 12 }
            ]
        );
    }

    #[test]
    fn point_and_boxplot() {
        let p = ChartSpec::new(
            Mark::Point,
            Encoding::raw("Horsepower"),
            Encoding::new("Weight", Aggregate::Sum),
        );
        assert_eq!(check(&p), vec![Violation::PointChannel { channel: Channel::Y }]);
        let b = ChartSpec::new(Mark::Boxplot, Encoding::raw("Origin"), Encoding::raw("Weight"));
        assert!(check(&b).is_empty());
        let bad = ChartSpec::new(
            Mark::Boxplot,
            Encoding::raw("Origin"),
            Encoding::new("Weight", Aggregate::Mean),
        );
        assert_eq!(check(&bad), vec![Violation::BoxplotShape]);
    }

    #[test]
    fn line_rules() {
        let trend = ChartSpec::new(Mark::Line, Encoding::raw("Year"), Encoding::raw("Weight"));
        assert!(check(&trend).is_empty());
        let binned = ChartSpec::new(
            Mark::Line,
            Encoding::new("Horsepower", Aggregate::Bin),
            Encoding::raw("Weight"),
        );
        assert_eq!(check(&binned), vec![Violation::LineBinnedNeedsAggregate]);
    }

    #[test]
    fn unknown_column_is_structural() {
        let spec = ChartSpec::new(Mark::Bar, Encoding::raw("Nope"), Encoding::raw("Weight"));
        assert_eq!(
            validate_chart(&spec, &cars_like()),
            Err(ChartError::UnknownColumn("Nope".into()))
        );
    }

    #[test]
    fn key_placement() {
        let spec = ChartSpec::new(Mark::Point, Encoding::raw("Horsepower"), Encoding::raw("Weight"));
        assert_eq!(check_key_placement(&spec, "Weight"), None);
        assert!(check_key_placement(&spec, "Origin").is_some());
        let colored = spec.with_color(Encoding::raw("Origin"));
        assert!(check_key_placement(&colored, "Origin").is_some());
    }
}
