//! Sandbox report ingestion.
//!
//! A report is a JSON document listing the API calls a sample made, each with
//! named arguments whose values arrive as bare strings. Every value is
//! classified into one of three types by its surface syntax; labels and
//! months come from a separate manifest.

mod manifest;
mod stats;
mod store;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use stats::{type_counts, type_proportions, TypeCounts, TypeProportions};
pub use store::{
    read_reports, write_reports, write_reports_with_meta, REPORTS_FORMAT, REPORTS_VERSION,
};

/// Longest hex literal (after `0x`) still treated as a 64-bit address.
pub const MAX_HEX_DIGITS: usize = 16;

/// Typed argument value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArgValue {
    Str(String),
    Int(i64),
    VAddr(u64),
}

impl ArgValue {
    /// Literal form used when writing reports back out.
    pub fn to_literal(&self) -> String {
        match self {
            ArgValue::Str(s) => s.clone(),
            ArgValue::Int(i) => i.to_string(),
            ArgValue::VAddr(a) => format!("0x{a:08x}"),
        }
    }
}

/// Classifies a raw value literal.
///
/// `0x`/`0X` followed by 1 to 16 hex digits is a virtual address, an optionally
/// signed run of decimal digits that fits in an `i64` is an integer, and
/// anything else is a string.
pub fn classify_arg_value(raw: &str) -> ArgValue {
    if let Some(hex) = raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        if !hex.is_empty()
            && hex.len() <= MAX_HEX_DIGITS
            && hex.bytes().all(|b| b.is_ascii_hexdigit())
        {
            if let Ok(addr) = u64::from_str_radix(hex, 16) {
                return ArgValue::VAddr(addr);
            }
        }
        return ArgValue::Str(raw.to_string());
    }
    let digits = raw
        .strip_prefix('-')
        .or_else(|| raw.strip_prefix('+'))
        .unwrap_or(raw);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        if let Ok(i) = raw.parse::<i64>() {
            return ArgValue::Int(i);
        }
    }
    ArgValue::Str(raw.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argument {
    pub name: String,
    pub value: ArgValue,
}

impl Argument {
    pub fn new(name: impl Into<String>, raw_value: &str) -> Self {
        Argument {
            name: name.into(),
            value: classify_arg_value(raw_value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCall {
    pub api: String,
    pub arguments: Vec<Argument>,
}

/// Calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: u16,
    month: u8,
}

impl Month {
    pub fn new(year: u16, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::config(format!("month {month} out of range")));
        }
        Ok(Month { year, month })
    }

    pub fn year(self) -> u16 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    /// Months since year 0, handy for arithmetic.
    pub fn ordinal(self) -> u32 {
        self.year as u32 * 12 + (self.month as u32 - 1)
    }

    pub fn from_ordinal(ordinal: u32) -> Self {
        Month {
            year: (ordinal / 12) as u16,
            month: (ordinal % 12 + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        Month::from_ordinal(self.ordinal() + 1)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("`{s}` is not a YYYY-MM month"));
        let b = s.as_bytes();
        if b.len() != 7 || b[4] != b'-' {
            return Err(bad());
        }
        let (y, m) = (&s[..4], &s[5..]);
        if !y.bytes().chain(m.bytes()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        Month::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl Serialize for Month {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Family label. The distinguished label `goodware` marks benign samples.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub String);

impl Label {
    pub const GOODWARE: &'static str = "goodware";

    pub fn new(s: impl Into<String>) -> Self {
        Label(s.into())
    }

    pub fn is_goodware(&self) -> bool {
        self.0.eq_ignore_ascii_case(Self::GOODWARE)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFlag {
    /// The report contained no API calls.
    NoCalls,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub sample_id: String,
    pub label: Label,
    pub month: Month,
    pub calls: Vec<ApiCall>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<ReportFlag>,
}

impl Report {
    pub fn new(
        sample_id: impl Into<String>,
        label: Label,
        month: Month,
        calls: Vec<ApiCall>,
    ) -> Self {
        let flags = if calls.is_empty() {
            vec![ReportFlag::NoCalls]
        } else {
            Vec::new()
        };
        Report {
            sample_id: sample_id.into(),
            label,
            month,
            calls,
            flags,
        }
    }

    pub fn has_warnings(&self) -> bool {
        !self.flags.is_empty()
    }

    /// Serializes the call list in the sandbox report schema.
    pub fn to_sandbox_json(&self) -> String {
        calls_to_json(&self.calls)
    }
}

/// Parses the call list of a sandbox report.
///
/// Accepts the flat `{"calls": [...]}` layout and, as a fallback, CAPE's
/// `behavior.processes[*].calls` layout. Unknown keys are ignored.
pub fn parse_calls(raw: &[u8]) -> Result<Vec<ApiCall>> {
    let root: Value = serde_json::from_slice(raw).map_err(|e| Error::Parse {
        offset: if e.is_eof() {
            raw.len()
        } else {
            byte_offset(raw, e.line(), e.column())
        },
        message: e.to_string(),
    })?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::schema("$", "top level is not an object"))?;

    if let Some(calls) = obj.get("calls") {
        return parse_call_array(calls, "calls");
    }
    if let Some(procs) = obj
        .get("behavior")
        .and_then(|b| b.get("processes"))
        .and_then(Value::as_array)
    {
        let mut out = Vec::new();
        for (p, proc_) in procs.iter().enumerate() {
            if let Some(calls) = proc_.get("calls") {
                out.extend(parse_call_array(
                    calls,
                    &format!("behavior.processes[{p}].calls"),
                )?);
            }
        }
        return Ok(out);
    }
    Err(Error::schema("calls", "missing key"))
}

/// Parses a report and attaches its manifest metadata.
pub fn parse_report(raw: &[u8], sample_id: &str, label: Label, month: Month) -> Result<Report> {
    let calls = parse_calls(raw)?;
    Ok(Report::new(sample_id, label, month, calls))
}

fn parse_call_array(v: &Value, path: &str) -> Result<Vec<ApiCall>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::schema(path, "expected an array"))?;
    arr.iter()
        .enumerate()
        .map(|(i, c)| parse_call(c, &format!("{path}[{i}]")))
        .collect()
}

fn parse_call(v: &Value, path: &str) -> Result<ApiCall> {
    let api = match v.get("api") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => {
            return Err(Error::schema(
                format!("{path}.api"),
                "expected a non-empty string",
            ))
        }
        None => return Err(Error::schema(format!("{path}.api"), "missing key")),
    };
    let arguments = match v.get("arguments") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(args)) => args
            .iter()
            .enumerate()
            .map(|(j, a)| parse_argument(a, &format!("{path}.arguments[{j}]")))
            .collect::<Result<_>>()?,
        Some(_) => {
            return Err(Error::schema(
                format!("{path}.arguments"),
                "expected an array",
            ))
        }
    };
    Ok(ApiCall { api, arguments })
}

fn parse_argument(v: &Value, path: &str) -> Result<Argument> {
    let name = match v.get("name") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(_) => {
            return Err(Error::schema(
                format!("{path}.name"),
                "expected a non-empty string",
            ))
        }
        None => return Err(Error::schema(format!("{path}.name"), "missing key")),
    };
    let raw = match v.get("value") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::Bool(b)) => b.to_string(),
        Some(Value::Null) => String::new(),
        Some(other) => other.to_string(),
        None => return Err(Error::schema(format!("{path}.value"), "missing key")),
    };
    Ok(Argument {
        name,
        value: classify_arg_value(&raw),
    })
}

/// serde_json reports 1-based line/column; map that back to a byte offset.
fn byte_offset(raw: &[u8], line: usize, column: usize) -> usize {
    let mut start = 0;
    for _ in 1..line {
        match raw[start..].iter().position(|&b| b == b'\n') {
            Some(p) => start += p + 1,
            None => break,
        }
    }
    (start + column.saturating_sub(1)).min(raw.len())
}

/// Writes calls in the sandbox report schema.
pub fn calls_to_json(calls: &[ApiCall]) -> String {
    let calls: Vec<Value> = calls
        .iter()
        .map(|c| {
            let args: Vec<Value> = c
                .arguments
                .iter()
                .map(|a| serde_json::json!({ "name": a.name, "value": a.value.to_literal() }))
                .collect();
            serde_json::json!({ "api": c.api, "arguments": args })
        })
        .collect();
    serde_json::json!({ "calls": calls }).to_string()
}

/// Keeps the first `limit` calls. Padding is left to the encoders.
///
/// # Panics
/// If `limit` is zero.
pub fn truncate_calls(report: &Report, limit: usize) -> Report {
    assert!(limit >= 1, "sequence length must be positive");
    let mut out = report.clone();
    out.calls.truncate(limit);
    out
}

/// Loads every sample listed in the manifest from `<dir>/<sample_id>.json`.
pub fn load_corpus(dir: &Path, manifest: &[ManifestEntry]) -> Result<Vec<Report>> {
    manifest
        .iter()
        .map(|entry| {
            let path = dir.join(format!("{}.json", entry.sample_id));
            let raw = std::fs::read(&path).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
            parse_report(&raw, &entry.sample_id, entry.label.clone(), entry.month).map_err(|e| {
                Error::InSample {
                    sample_id: entry.sample_id.clone(),
                    source: Box::new(e),
                }
            })
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const FIG4: &str = r#"{"calls":[{"api":"LdrGetProcedureAddress","arguments":[
        {"name":"ModuleName","value":"ADVAPI32.dll"},
        {"name":"ModuleHandle","value":"0x76520000"},
        {"name":"FunctionName","value":"CryptDeriveKey"},
        {"name":"Ordinal","value":"0"},
        {"name":"FunctionAddress","value":"0x76563464"}]}]}"#;

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_arg_value("0x76563464"),
            ArgValue::VAddr(0x76563464)
        );
        assert_eq!(classify_arg_value("0"), ArgValue::Int(0));
        assert_eq!(
            classify_arg_value("IMM32.DLL"),
            ArgValue::Str("IMM32.DLL".into())
        );
        assert_eq!(classify_arg_value("-5"), ArgValue::Int(-5));
        assert_eq!(classify_arg_value("0XfF"), ArgValue::VAddr(255));
        assert_eq!(
            classify_arg_value("0xffffffff"),
            ArgValue::VAddr(0xffff_ffff)
        );
    }

    #[test]
    fn classify_edge_cases_fall_to_str() {
        for raw in [
            "",
            "0x",
            "-",
            "+",
            "0x12345678901234567",
            "1.5",
            "12a",
            "0xzz",
            "99999999999999999999",
        ] {
            assert!(matches!(classify_arg_value(raw), ArgValue::Str(_)), "{raw}");
        }
        assert_eq!(
            classify_arg_value("0xffffffffffffffff"),
            ArgValue::VAddr(u64::MAX)
        );
    }

    #[test]
    fn parses_fig4_record() {
        let calls = parse_calls(FIG4.as_bytes()).unwrap();
        assert_eq!(calls.len(), 1);
        let c = &calls[0];
        assert_eq!(c.api, "LdrGetProcedureAddress");
        assert_eq!(c.arguments.len(), 5);
        assert_eq!(c.arguments[0].value, ArgValue::Str("ADVAPI32.dll".into()));
        assert_eq!(c.arguments[1].value, ArgValue::VAddr(0x76520000));
        assert_eq!(c.arguments[3].name, "Ordinal");
        assert_eq!(c.arguments[3].value, ArgValue::Int(0));
    }

    #[test]
    fn empty_calls_are_flagged() {
        let r = parse_report(
            br#"{"calls":[]}"#,
            "s",
            Label::new("x"),
            "2019-01".parse().unwrap(),
        )
        .unwrap();
        assert!(r.calls.is_empty());
        assert_eq!(r.flags, vec![ReportFlag::NoCalls]);
    }

    #[test]
    fn truncated_json_reports_offset() {
        let raw = &FIG4.as_bytes()[..60];
        match parse_calls(raw) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, raw.len()),
            other => panic!("unexpected {other:?}"),
        }
        match parse_calls(b"{\"calls\": [}") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 11),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_api_is_schema_error() {
        let err = parse_calls(br#"{"calls":[{"api":"A"},{"arguments":[]}]}"#).unwrap_err();
        match err {
            Error::Schema { path, .. } => assert_eq!(path, "calls[1].api"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_ignored_and_numbers_accepted() {
        let raw = br#"{"target":{"file":"x"},"calls":[{"api":"A","tid":4,"arguments":[{"name":"n","value":21,"pretty":"x"}]}]}"#;
        let calls = parse_calls(raw).unwrap();
        assert_eq!(calls[0].arguments[0].value, ArgValue::Int(21));
    }

    #[test]
    fn cape_process_layout() {
        let raw = br#"{"behavior":{"processes":[{"calls":[{"api":"A","arguments":[]}]},{"calls":[{"api":"B"}]}]}}"#;
        let calls = parse_calls(raw).unwrap();
        assert_eq!(
            calls.iter().map(|c| c.api.as_str()).collect::<Vec<_>>(),
            ["A", "B"]
        );
    }

    #[test]
    fn truncation() {
        let calls: Vec<ApiCall> = (0..2000)
            .map(|i| ApiCall {
                api: format!("A{i}"),
                arguments: vec![],
            })
            .collect();
        let r = Report::new("s", Label::new("x"), "2019-01".parse().unwrap(), calls);
        let t = truncate_calls(&r, 1024);
        assert_eq!(t.calls.len(), 1024);
        assert_eq!(t.calls[..], r.calls[..1024]);
        let short = truncate_calls(&truncate_calls(&r, 10), 1024);
        assert_eq!(short.calls.len(), 10);
        assert_eq!(truncate_calls(&truncate_calls(&r, 1), 1).calls.len(), 1);
    }

    #[test]
    fn month_parsing_and_order() {
        let a: Month = "2019-04".parse().unwrap();
        let b: Month = "2019-05".parse().unwrap();
        assert!(a < b);
        assert_eq!(a.next(), b);
        assert_eq!(
            "2019-12".parse::<Month>().unwrap().next().to_string(),
            "2020-01"
        );
        for bad in ["2019-13", "2019-00", "19-01", "2019/01", "2019-1", ""] {
            assert!(bad.parse::<Month>().is_err(), "{bad}");
        }
    }
}
