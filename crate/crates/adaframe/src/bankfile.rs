//! Filter banks as JSON. Taps are written with 17 significant digits.

use std::fs;
use std::path::Path;

use adaframe_core::{BankKind, Filter, FilterBank, Role, SamplingMatrix};
use serde_json::{json, Map, Number, Value};

use crate::error::{Error, Result};
use crate::report::sig17;

pub const VERSION: u64 = 1;

fn kind_name(kind: BankKind) -> &'static str {
    match kind {
        BankKind::Frame => "frame",
        BankKind::BiframeDecomp => "biframe-decomp",
        BankKind::BiframeRecon => "biframe-recon",
    }
}

fn number(v: f64) -> Result<Value> {
    if !v.is_finite() {
        return Err(Error::BankFile(format!("non-finite tap {v}")));
    }
    Ok(Value::Number(sig17(v).parse::<Number>().expect("formatted float is a JSON number")))
}

pub fn to_json(bank: &FilterBank) -> Result<Value> {
    let filters = bank
        .filters()
        .iter()
        .map(|f| f.taps().iter().map(|&t| number(t)).collect::<Result<Vec<_>>>().map(Value::Array))
        .collect::<Result<Vec<_>>>()?;
    let roles: Vec<&str> = bank
        .roles()
        .iter()
        .map(|r| match r {
            Role::Lowpass => "lowpass",
            Role::Highpass => "highpass",
        })
        .collect();
    Ok(json!({
        "version": VERSION,
        "kind": kind_name(bank.kind()),
        "d": bank.ndim(),
        "m": bank.m(),
        "support": bank.support(),
        "samplingDiag": bank.sampling().diag(),
        "roles": roles,
        "channelSupport": bank.channel_support(),
        "lowpassConstrained": bank.lowpass_constrained(),
        "filters": filters,
    }))
}

pub fn encode(bank: &FilterBank) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&to_json(bank)?).map_err(|e| Error::BankFile(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::BankFile(format!("missing field `{key}`")))
}

fn uint(v: &Value, key: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::BankFile(format!("`{key}` must be a non-negative integer")))
}

fn uints(v: &Value, key: &str) -> Result<Vec<usize>> {
    v.as_array()
        .ok_or_else(|| Error::BankFile(format!("`{key}` must be an array")))?
        .iter()
        .map(|x| uint(x, key))
        .collect()
}

pub fn from_json(v: &Value) -> Result<FilterBank> {
    let obj = v.as_object().ok_or_else(|| Error::BankFile("expected a JSON object".into()))?;
    let version = uint(get(obj, "version")?, "version")?;
    if version as u64 != VERSION {
        return Err(Error::BankFile(format!("unsupported version {version}")));
    }
    let kind = match get(obj, "kind")?.as_str() {
        Some("frame") => BankKind::Frame,
        Some("biframe-decomp") => BankKind::BiframeDecomp,
        Some("biframe-recon") => BankKind::BiframeRecon,
        other => return Err(Error::BankFile(format!("unknown kind {other:?}"))),
    };
    let d = uint(get(obj, "d")?, "d")?;
    let m = uint(get(obj, "m")?, "m")?;
    let support = uints(get(obj, "support")?, "support")?;
    let sampling = uints(get(obj, "samplingDiag")?, "samplingDiag")?;
    let channel_support = uint(get(obj, "channelSupport")?, "channelSupport")?;
    if support.len() != d || sampling.len() != d {
        return Err(Error::BankFile(format!(
            "d = {d} but support {support:?} and samplingDiag {sampling:?}"
        )));
    }
    let filters = get(obj, "filters")?
        .as_array()
        .ok_or_else(|| Error::BankFile("`filters` must be an array".into()))?
        .iter()
        .map(|f| {
            let taps = f
                .as_array()
                .ok_or_else(|| Error::BankFile("each filter must be an array of taps".into()))?
                .iter()
                .map(|t| t.as_f64().ok_or_else(|| Error::BankFile("taps must be numbers".into())))
                .collect::<Result<Vec<_>>>()?;
            Ok(Filter::with_channels(support.clone(), channel_support, taps)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if filters.len() != m {
        return Err(Error::BankFile(format!("m = {m} but {} filters", filters.len())));
    }
    let roles = get(obj, "roles")?
        .as_array()
        .ok_or_else(|| Error::BankFile("`roles` must be an array".into()))?
        .iter()
        .map(|r| match r.as_str() {
            Some("lowpass") => Ok(Role::Lowpass),
            Some("highpass") => Ok(Role::Highpass),
            other => Err(Error::BankFile(format!("unknown role {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bank = FilterBank::new(filters, SamplingMatrix::new(sampling)?, kind)?;
    if obj.get("lowpassConstrained").and_then(Value::as_bool).unwrap_or(false) {
        bank = bank.mark_lowpass_constrained();
    }
    Ok(bank.with_roles(roles)?)
}

pub fn decode(text: &str) -> Result<FilterBank> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::BankFile(e.to_string()))?;
    from_json(&v)
}

pub fn read(path: impl AsRef<Path>) -> Result<FilterBank> {
    decode(&fs::read_to_string(path)?)
}

pub fn write(path: impl AsRef<Path>, bank: &FilterBank) -> Result<()> {
    fs::write(path, encode(bank)?)?;
    Ok(())
}
