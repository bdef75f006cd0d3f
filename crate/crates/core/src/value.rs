//! Runtime values and the conversions the embedded dialect applies to them.
//!
//! The value model follows dynamic typing: a column may hold any storage
//! class, and comparisons across classes are total (NULL < numbers < text).
//! Every comparison in the toy engine goes through [`SortKey`], so index
//! range scans and predicate evaluation can never disagree on ordering.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::{Affinity, Collation};

/// A single SQL value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SqlValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Boolean(bool),
}

impl SqlValue {
    pub fn text(s: impl Into<String>) -> Self {
        SqlValue::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, SqlValue::Null)
    }

    /// Booleans collapse to integers outside native-boolean dialects.
    pub fn normalize_bool(self, native_boolean: bool) -> Self {
        match self {
            SqlValue::Boolean(b) if !native_boolean => SqlValue::Integer(b as i64),
            v => v,
        }
    }

    /// Real results that are NaN become NULL, mirroring the embedded engine.
    pub fn real(r: f64) -> Self {
        if r.is_nan() {
            SqlValue::Null
        } else {
            SqlValue::Real(r)
        }
    }

    /// Text form used by concatenation, LIKE/GLOB and TEXT affinity.
    pub fn to_text(&self) -> Option<String> {
        match self {
            SqlValue::Null => None,
            SqlValue::Integer(i) => Some(i.to_string()),
            SqlValue::Real(r) => Some(real_to_text(*r)),
            SqlValue::Text(s) => Some(s.clone()),
            SqlValue::Boolean(b) => Some((*b as i64).to_string()),
        }
    }

    /// Numeric view used by arithmetic: text is read by its longest numeric
    /// prefix, defaulting to 0.
    pub fn to_number(&self) -> Option<Number> {
        match self {
            SqlValue::Null => None,
            SqlValue::Integer(i) => Some(Number::Int(*i)),
            SqlValue::Real(r) => Some(Number::Real(*r)),
            SqlValue::Boolean(b) => Some(Number::Int(*b as i64)),
            SqlValue::Text(s) => Some(numeric_prefix(s).0),
        }
    }

    /// SQL truth value: `None` for NULL, otherwise numeric value != 0.
    pub fn truth(&self) -> Option<bool> {
        match self.to_number()? {
            Number::Int(i) => Some(i != 0),
            Number::Real(r) => Some(r != 0.0),
        }
    }

    pub fn storage_class(&self) -> &'static str {
        match self {
            SqlValue::Null => "null",
            SqlValue::Integer(_) | SqlValue::Boolean(_) => "integer",
            SqlValue::Real(_) => "real",
            SqlValue::Text(_) => "text",
        }
    }
}

impl From<Number> for SqlValue {
    fn from(n: Number) -> Self {
        match n {
            Number::Int(i) => SqlValue::Integer(i),
            Number::Real(r) => SqlValue::real(r),
        }
    }
}

impl From<Option<bool>> for SqlValue {
    fn from(t: Option<bool>) -> Self {
        match t {
            None => SqlValue::Null,
            Some(b) => SqlValue::Integer(b as i64),
        }
    }
}

impl fmt::Display for SqlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SqlValue::Null => write!(f, "NULL"),
            SqlValue::Text(s) => write!(f, "{s:?}"),
            other => write!(f, "{}", other.to_text().unwrap_or_default()),
        }
    }
}

/// Integer or real number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Number {
    Int(i64),
    Real(f64),
}

impl Number {
    pub fn as_f64(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Real(r) => r,
        }
    }
}

pub fn real_to_text(r: f64) -> String {
    if r.is_infinite() {
        return if r > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if r.fract() == 0.0 && r.abs() < 1e15 {
        format!("{r:.1}")
    } else {
        format!("{r:?}")
    }
}

fn is_space(c: u8) -> bool {
    matches!(c, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

/// Scans a numeric literal at the start of `b`. Returns the byte length and
/// whether it had a fraction or exponent, or `None` if no digits were found.
fn scan_number(b: &[u8]) -> Option<(usize, bool)> {
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    let mut is_real = false;
    if i < b.len() && b[i] == b'.' {
        let frac_start = i + 1;
        let mut j = frac_start;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if digits > 0 || j > frac_start {
            digits += j - frac_start;
            i = j;
            is_real = true;
        }
    }
    if digits == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
            is_real = true;
        }
    }
    Some((i, is_real))
}

fn parse_scanned(lit: &str, is_real: bool) -> Number {
    if !is_real {
        if let Ok(i) = lit.parse::<i64>() {
            return Number::Int(i);
        }
    }
    Number::Real(lit.parse::<f64>().unwrap_or(0.0))
}

/// Longest numeric prefix after leading whitespace; `0` when there is none.
/// The flag reports whether the whole string was consumed (ignoring trailing
/// whitespace).
pub fn numeric_prefix(s: &str) -> (Number, bool) {
    let b = s.as_bytes();
    let start = b.iter().position(|c| !is_space(*c)).unwrap_or(b.len());
    match scan_number(&b[start..]) {
        None => (Number::Int(0), false),
        Some((len, is_real)) => {
            let n = parse_scanned(&s[start..start + len], is_real);
            let rest = &b[start + len..];
            (n, rest.iter().all(|c| is_space(*c)))
        }
    }
}

/// Interprets text as a number only if the whole string (modulo surrounding
/// whitespace) is a well-formed numeric literal.
pub fn parse_numeric_text(s: &str) -> Option<Number> {
    match numeric_prefix(s) {
        (n, true) if s.bytes().any(|c| c.is_ascii_digit()) => Some(n),
        _ => None,
    }
}

fn real_as_int(r: f64) -> Option<i64> {
    if r.fract() == 0.0 && (-9.223_372_036_854_775e18..9.223_372_036_854_775e18).contains(&r) {
        Some(r as i64)
    } else {
        None
    }
}

/// Applies a column affinity to a value, as done on storage and on the
/// "other" operand of an affinity-aware comparison.
pub fn apply_affinity(v: SqlValue, affinity: Affinity) -> SqlValue {
    match (affinity, v) {
        (_, SqlValue::Null) => SqlValue::Null,
        (Affinity::Blob, v) => v,
        (Affinity::Text, v @ SqlValue::Text(_)) => v,
        (Affinity::Text, v) => SqlValue::Text(v.to_text().unwrap_or_default()),
        (Affinity::Real, SqlValue::Text(s)) => match parse_numeric_text(&s) {
            Some(n) => SqlValue::real(n.as_f64()),
            None => SqlValue::Text(s),
        },
        (Affinity::Real, SqlValue::Integer(i)) => SqlValue::Real(i as f64),
        (Affinity::Real, SqlValue::Boolean(b)) => SqlValue::Real(b as i64 as f64),
        (Affinity::Real, v) => v,
        (Affinity::Integer | Affinity::Numeric, SqlValue::Text(s)) => match parse_numeric_text(&s) {
            Some(Number::Int(i)) => SqlValue::Integer(i),
            Some(Number::Real(r)) => match real_as_int(r) {
                Some(i) => SqlValue::Integer(i),
                None => SqlValue::real(r),
            },
            None => SqlValue::Text(s),
        },
        (Affinity::Integer | Affinity::Numeric, SqlValue::Real(r)) => match real_as_int(r) {
            Some(i) => SqlValue::Integer(i),
            None => SqlValue::Real(r),
        },
        (Affinity::Integer | Affinity::Numeric, SqlValue::Boolean(b)) => SqlValue::Integer(b as i64),
        (Affinity::Integer | Affinity::Numeric, v) => v,
    }
}

/// Exact comparison of an integer against a binary64 value.
pub fn cmp_int_real(i: i64, r: f64) -> Ordering {
    if r >= 9_223_372_036_854_775_808.0 {
        return Ordering::Less;
    }
    if r < -9_223_372_036_854_775_808.0 {
        return Ordering::Greater;
    }
    let whole = r.trunc();
    match i.cmp(&(whole as i64)) {
        Ordering::Equal => {
            let frac = r - whole;
            if frac > 0.0 {
                Ordering::Less
            } else if frac < 0.0 {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        }
        o => o,
    }
}

fn cmp_numbers(a: Number, b: Number) -> Ordering {
    match (a, b) {
        (Number::Int(x), Number::Int(y)) => x.cmp(&y),
        (Number::Int(x), Number::Real(y)) => cmp_int_real(x, y),
        (Number::Real(x), Number::Int(y)) => cmp_int_real(y, x).reverse(),
        (Number::Real(x), Number::Real(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
    }
}

/// Collation-normalized, totally ordered image of a value.
///
/// `Top` never corresponds to a stored value; it is a sentinel used to build
/// exclusive bounds for index range scans.
#[derive(Debug, Clone)]
pub enum SortKey {
    Null,
    Num(Number),
    Text(String),
    Top,
}

impl SortKey {
    pub fn new(v: &SqlValue, collation: Collation) -> Self {
        match v {
            SqlValue::Null => SortKey::Null,
            SqlValue::Integer(i) => SortKey::Num(Number::Int(*i)),
            SqlValue::Boolean(b) => SortKey::Num(Number::Int(*b as i64)),
            SqlValue::Real(r) if r.is_nan() => SortKey::Null,
            SqlValue::Real(r) => SortKey::Num(Number::Real(*r)),
            SqlValue::Text(s) => SortKey::Text(collation.normalize(s)),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            SortKey::Null => 0,
            SortKey::Num(_) => 1,
            SortKey::Text(_) => 2,
            SortKey::Top => 3,
        }
    }

    /// The value a covering index would hand back for this key.
    pub fn to_value(&self) -> SqlValue {
        match self {
            SortKey::Null | SortKey::Top => SqlValue::Null,
            SortKey::Num(n) => SqlValue::from(*n),
            SortKey::Text(s) => SqlValue::Text(s.clone()),
        }
    }
}

impl PartialEq for SortKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SortKey {}

impl PartialOrd for SortKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SortKey {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (SortKey::Num(a), SortKey::Num(b)) => cmp_numbers(*a, *b),
            (SortKey::Text(a), SortKey::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

/// Total order used for every comparison between two non-NULL values.
pub fn compare_values(a: &SqlValue, b: &SqlValue, collation: Collation) -> Ordering {
    SortKey::new(a, collation).cmp(&SortKey::new(b, collation))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_text_accepts_surrounding_whitespace() {
        assert_eq!(parse_numeric_text("\n2"), Some(Number::Int(2)));
        assert_eq!(parse_numeric_text(" 1.5 "), Some(Number::Real(1.5)));
        assert_eq!(parse_numeric_text("1abc"), None);
        assert_eq!(parse_numeric_text("abc"), None);
        assert_eq!(parse_numeric_text(""), None);
        assert_eq!(parse_numeric_text("."), None);
        assert_eq!(parse_numeric_text("inf"), None);
    }

    #[test]
    fn numeric_prefix_defaults_to_zero() {
        assert_eq!(numeric_prefix("12abc"), (Number::Int(12), false));
        assert_eq!(numeric_prefix("abc"), (Number::Int(0), false));
        assert_eq!(numeric_prefix("-3.5e1x"), (Number::Real(-35.0), false));
        assert_eq!(numeric_prefix("1e"), (Number::Int(1), false));
    }

    #[test]
    fn affinity_conversions() {
        assert_eq!(apply_affinity(SqlValue::text("1"), Affinity::Integer), SqlValue::Integer(1));
        assert_eq!(apply_affinity(SqlValue::text("3.0"), Affinity::Numeric), SqlValue::Integer(3));
        assert_eq!(apply_affinity(SqlValue::text("x"), Affinity::Integer), SqlValue::text("x"));
        assert_eq!(apply_affinity(SqlValue::Integer(1), Affinity::Text), SqlValue::text("1"));
        assert_eq!(apply_affinity(SqlValue::Real(0.5), Affinity::Text), SqlValue::text("0.5"));
        assert_eq!(apply_affinity(SqlValue::Integer(2), Affinity::Real), SqlValue::Real(2.0));
        assert_eq!(apply_affinity(SqlValue::text("7"), Affinity::Blob), SqlValue::text("7"));
    }

    #[test]
    fn cross_class_order() {
        let c = Collation::Binary;
        assert_eq!(compare_values(&SqlValue::Integer(5), &SqlValue::text("1"), c), Ordering::Less);
        assert_eq!(compare_values(&SqlValue::Real(0.5), &SqlValue::Integer(1), c), Ordering::Less);
        assert_eq!(compare_values(&SqlValue::Integer(1), &SqlValue::Real(1.0), c), Ordering::Equal);
        assert_eq!(compare_values(&SqlValue::text("a"), &SqlValue::text("B"), c), Ordering::Greater);
        assert_eq!(compare_values(&SqlValue::text("a"), &SqlValue::text("B"), Collation::NoCase), Ordering::Less);
    }

    #[test]
    fn int_real_comparison_is_exact() {
        assert_eq!(cmp_int_real(i64::MAX, i64::MAX as f64), Ordering::Less);
        assert_eq!(cmp_int_real(-1, -0.5), Ordering::Less);
        assert_eq!(cmp_int_real(0, -0.5), Ordering::Greater);
        assert_eq!(cmp_int_real(3, 3.0), Ordering::Equal);
    }
}
