//! Vega-Lite v5 documents for charts.
//!
//! Emitted documents use a small subset of the schema: `mark`, `encoding.{x,y,color}`
//! and a `transform` pipeline of aggregate, window and filter steps (top/bottom-k
//! only). [`validate_render_spec`] checks a document against exactly that subset.

use super::{Aggregate, ChartSpec, Channel, LimitDirection};
use crate::data::{ColumnType, Dataset};
use serde_json::{json, Map, Value};

pub const VEGA_LITE_SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";

fn field_type(dataset: &Dataset, column: &str) -> ColumnType {
    dataset
        .column(column)
        .map_or(ColumnType::Nominal, |c| c.ctype)
}

fn channel_doc(dataset: &Dataset, e: &super::Encoding) -> Value {
    let mut m = Map::new();
    match e.aggregate {
        Aggregate::Count => {
            m.insert("aggregate".into(), json!("count"));
            m.insert("type".into(), json!("quantitative"));
        }
        Aggregate::Bin => {
            m.insert("field".into(), json!(e.column));
            m.insert("bin".into(), json!(true));
            m.insert("type".into(), json!("quantitative"));
        }
        Aggregate::None => {
            m.insert("field".into(), json!(e.column));
            m.insert(
                "type".into(),
                json!(field_type(dataset, &e.column).vega_type()),
            );
        }
        agg => {
            m.insert("field".into(), json!(e.column));
            m.insert("aggregate".into(), json!(agg.name()));
            m.insert("type".into(), json!("quantitative"));
        }
    }
    Value::Object(m)
}

/// Renders a chart as a self-contained Vega-Lite document reading the named dataset.
pub fn to_render_spec(spec: &ChartSpec, dataset: &Dataset, dataset_ref: &str) -> Value {
    let mark = match spec.mark {
        super::Mark::Boxplot => json!({"type": "boxplot", "extent": 1.5}),
        m => json!(m.name()),
    };
    let mut encoding = Map::new();
    let mut transform = Vec::new();

    match spec.limit {
        Some(limit) => {
            // Aggregate per category, rank by the measure, keep the first k.
            let (cat_channel, measure_channel) = if spec.x.aggregate == Aggregate::None {
                (Channel::X, Channel::Y)
            } else {
                (Channel::Y, Channel::X)
            };
            let cat = spec.encoding(cat_channel).expect("positional");
            let measure = spec.encoding(measure_channel).expect("positional");
            let alias = match measure.aggregate {
                Aggregate::Count => "count".to_string(),
                agg => format!("{}_{}", agg.name(), measure.column),
            };
            let mut op = Map::new();
            op.insert("op".into(), json!(measure.aggregate.name()));
            if measure.aggregate != Aggregate::Count {
                op.insert("field".into(), json!(measure.column));
            }
            op.insert("as".into(), json!(alias));
            let order = match limit.direction {
                LimitDirection::Top => "descending",
                LimitDirection::Bottom => "ascending",
            };
            transform.push(json!({"aggregate": [Value::Object(op)], "groupby": [cat.column]}));
            transform.push(json!({
                "window": [{"op": "row_number", "as": "rank"}],
                "sort": [{"field": alias, "order": order}]
            }));
            transform.push(json!({"filter": format!("datum.rank <= {}", limit.k)}));
            let sort = match (limit.direction, measure_channel) {
                (LimitDirection::Top, Channel::Y) => "-y",
                (LimitDirection::Top, _) => "-x",
                (LimitDirection::Bottom, Channel::Y) => "y",
                (LimitDirection::Bottom, _) => "x",
            };
            encoding.insert(
                cat_channel.name().into(),
                json!({"field": cat.column, "type": "nominal", "sort": sort}),
            );
            encoding.insert(
                measure_channel.name().into(),
                json!({
                    "field": alias,
                    "type": "quantitative",
                    "title": format!("{}({})", measure.aggregate.name(), measure.column)
                }),
            );
        }
        None => {
            for (channel, e) in spec.channels() {
                encoding.insert(channel.name().into(), channel_doc(dataset, e));
            }
        }
    }

    let mut doc = Map::new();
    doc.insert("$schema".into(), json!(VEGA_LITE_SCHEMA));
    doc.insert("data".into(), json!({ "name": dataset_ref }));
    doc.insert("mark".into(), mark);
    doc.insert("encoding".into(), Value::Object(encoding));
    if !transform.is_empty() {
        doc.insert("transform".into(), Value::Array(transform));
    }
    Value::Object(doc)
}

const MARKS: [&str; 4] = ["bar", "line", "point", "boxplot"];
const TYPES: [&str; 4] = ["quantitative", "nominal", "temporal", "ordinal"];
const OPS: [&str; 5] = ["mean", "sum", "min", "max", "count"];

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], at: &str, errs: &mut Vec<String>) {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            errs.push(format!("{at}: unexpected key {k:?}"));
        }
    }
}

fn check_channel(name: &str, v: &Value, errs: &mut Vec<String>) {
    let Some(obj) = v.as_object() else {
        errs.push(format!("encoding.{name}: not an object"));
        return;
    };
    let at = format!("encoding.{name}");
    check_keys(obj, &["field", "type", "aggregate", "bin", "sort", "title"], &at, errs);
    match obj.get("type").and_then(Value::as_str) {
        Some(t) if TYPES.contains(&t) => {}
        other => errs.push(format!("{at}: bad type {other:?}")),
    }
    let aggregate = obj.get("aggregate").and_then(Value::as_str);
    if let Some(a) = aggregate {
        if !OPS.contains(&a) {
            errs.push(format!("{at}: bad aggregate {a:?}"));
        }
    }
    if obj.get("field").and_then(Value::as_str).is_none() && aggregate != Some("count") {
        errs.push(format!("{at}: missing field"));
    }
    if let Some(b) = obj.get("bin") {
        if b != &Value::Bool(true) {
            errs.push(format!("{at}: bin must be true"));
        }
    }
}

fn check_transform(step: &Value, errs: &mut Vec<String>) {
    let Some(obj) = step.as_object() else {
        errs.push("transform: step is not an object".into());
        return;
    };
    if obj.contains_key("aggregate") {
        check_keys(obj, &["aggregate", "groupby"], "transform.aggregate", errs);
        let ok = obj["aggregate"].as_array().is_some_and(|ops| {
            ops.iter().all(|op| {
                op.get("op")
                    .and_then(Value::as_str)
                    .is_some_and(|o| OPS.contains(&o))
                    && op.get("as").and_then(Value::as_str).is_some()
            })
        }) && obj.get("groupby").and_then(Value::as_array).is_some();
        if !ok {
            errs.push("transform.aggregate: malformed".into());
        }
    } else if obj.contains_key("window") {
        check_keys(obj, &["window", "sort"], "transform.window", errs);
        if obj["window"].as_array().is_none() {
            errs.push("transform.window: malformed".into());
        }
    } else if obj.contains_key("filter") {
        check_keys(obj, &["filter"], "transform.filter", errs);
        if obj["filter"].as_str().is_none() {
            errs.push("transform.filter: must be an expression string".into());
        }
    } else {
        errs.push(format!("transform: unsupported step {step}"));
    }
}

/// Checks a document against the emitted Vega-Lite subset.
pub fn validate_render_spec(doc: &Value) -> Result<(), Vec<String>> {
    let mut errs = Vec::new();
    let Some(obj) = doc.as_object() else {
        return Err(vec!["document is not an object".into()]);
    };
    check_keys(
        obj,
        &["$schema", "data", "mark", "encoding", "transform"],
        "document",
        &mut errs,
    );
    let mark = match obj.get("mark") {
        Some(Value::String(m)) => Some(m.as_str()),
        Some(Value::Object(m)) => m.get("type").and_then(Value::as_str),
        _ => None,
    };
    if !mark.is_some_and(|m| MARKS.contains(&m)) {
        errs.push(format!("mark: unsupported {mark:?}"));
    }
    match obj.get("encoding").and_then(Value::as_object) {
        None => errs.push("encoding: missing".into()),
        Some(enc) => {
            check_keys(enc, &["x", "y", "color"], "encoding", &mut errs);
            for required in ["x", "y"] {
                if !enc.contains_key(required) {
                    errs.push(format!("encoding.{required}: missing"));
                }
            }
            for (name, v) in enc {
                check_channel(name, v, &mut errs);
            }
        }
    }
    if let Some(t) = obj.get("transform") {
        match t.as_array() {
            Some(steps) => steps.iter().for_each(|s| check_transform(s, &mut errs)),
            None => errs.push("transform: not an array".into()),
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}
