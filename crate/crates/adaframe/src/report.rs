//! JSON and CSV renderings of results. Floats carry 17 significant digits.

use adaframe_core::pipelines::{CompressionResult, DeconvReport};
use adaframe_core::uep::UepReport;
use serde_json::{Map, Number, Value};

/// `v` with 17 significant digits; `inf`, `-inf` and `nan` spelled out.
pub fn sig17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// JSON number with 17 significant digits, or the string spelling for
/// non-finite values.
pub fn json_f64(v: f64) -> Value {
    match sig17(v).parse::<Number>() {
        Ok(n) if v.is_finite() => Value::Number(n),
        _ => Value::String(sig17(v)),
    }
}

fn object(fields: Vec<(&str, Value)>) -> Value {
    Value::Object(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

fn f64_array(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| json_f64(x)).collect())
}

pub fn uep_json(r: &UepReport) -> Value {
    object(vec![
        ("timeResidual", json_f64(r.time_residual)),
        ("spectralResidual", json_f64(r.spectral_residual)),
        ("equationCount", r.equation_count.into()),
        ("unknownCount", r.unknown_count.into()),
        ("feasible", r.feasible.into()),
    ])
}

pub fn compression_json(r: &CompressionResult) -> Value {
    object(vec![
        ("compressionRatio", json_f64(r.compression_ratio)),
        ("kept", r.kept.into()),
        ("total", r.total.into()),
        ("psnr", json_f64(r.psnr_db)),
    ])
}

pub fn deconv_json(r: &DeconvReport) -> Value {
    object(vec![
        ("transposeErrorPerLayer", f64_array(&r.transpose_error)),
        ("uepErrorPerLayer", f64_array(&r.uep_error)),
    ])
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}
