//! Two-user 16/4-QAM conditional BER, written out by hand from the
//! decision-region geometry.

use num_rational::Ratio;
use risnoma::constellation::{
    bit_expression, canonical, column_terms, expressions_to_json, extract_ber_terms, SignedRow,
};
use std::collections::BTreeMap;
use std::path::Path;

type Row = [i64; 2];

// distances and thresholds as integer combinations of (h1, h2)
const D1: Row = [1, -1];
const D2: Row = [1, 1];
const D3: Row = [3, -1];
const D4: Row = [3, 1];
const L1: Row = [1, 0];
const L2: Row = [2, 0];
const L3: Row = [3, 0];

fn add(a: Row, b: Row) -> Row {
    [a[0] + b[0], a[1] + b[1]]
}

fn neg(a: Row) -> Row {
    [-a[0], -a[1]]
}

fn r(n: i64, d: i64) -> Ratio<i64> {
    Ratio::new(n, d)
}

/// Transmitted levels from the left, `-delta_4 .. delta_4`.
fn levels() -> [Row; 8] {
    [neg(D4), neg(D3), neg(D2), neg(D1), D1, D2, D3, D4]
}

/// Sign bit of user 1 given column `m` (1-based): the error event is
/// crossing zero.
fn b11_column(m: usize) -> Vec<(i8, Row)> {
    let v = levels()[m - 1];
    if m <= 4 {
        vec![(1, neg(v))]
    } else {
        vec![(1, v)]
    }
}

/// Second bit of user 1: inner columns err outside `[-l2, l2]`, outer ones
/// inside it.
fn b12_column(m: usize) -> Vec<(i8, Row)> {
    let v = levels()[m - 1];
    let inner = (3..=6).contains(&m);
    if inner {
        vec![(1, add(v, L2)), (1, add(L2, neg(v)))]
    } else {
        // Q(-l2 - v) - Q(l2 - v)
        vec![(1, add(neg(L2), neg(v))), (-1, add(L2, neg(v)))]
    }
}

/// User 2 for the odd columns, seven alternating terms each.
fn b21_column(m: usize) -> Vec<(i8, Row)> {
    let v = levels()[m - 1];
    let shift = neg(v);
    let bounds = [neg(L3), neg(L2), neg(L1), [0, 0], L1, L2, L3];
    bounds
        .iter()
        .enumerate()
        .map(|(i, b)| (if i % 2 == 0 { 1 } else { -1 }, add(*b, shift)))
        .collect()
}

fn as_rows(terms: &[SignedRow]) -> Vec<(i8, Row)> {
    let mut v: Vec<(i8, Row)> = terms.iter().map(|t| (t.sign, [t.a[0], t.a[1]])).collect();
    v.sort();
    v
}

fn sorted(mut v: Vec<(i8, Row)>) -> Vec<(i8, Row)> {
    v.sort();
    v
}

/// Canonical merge: orient each row positive at (h1, h2) = (2, 1), fold the
/// `Q(-x) = 1 - Q(x)` constants into a separate total.
fn merge(raw: &[(Ratio<i64>, Row)]) -> (BTreeMap<Row, Ratio<i64>>, Ratio<i64>) {
    let mut map = BTreeMap::new();
    let mut constant = r(0, 1);
    for &(c, a) in raw {
        let value = 2 * a[0] + a[1];
        assert_ne!(value, 0);
        if value > 0 {
            *map.entry(a).or_insert(r(0, 1)) += c;
        } else {
            constant += c;
            *map.entry(neg(a)).or_insert(r(0, 1)) -= c;
        }
    }
    map.retain(|_, c| *c != r(0, 1));
    (map, constant)
}

fn generated(user: usize) -> (BTreeMap<Row, Ratio<i64>>, Ratio<i64>) {
    let exprs = extract_ber_terms(&[4, 2]).unwrap();
    let mut map = BTreeMap::new();
    let mut constant = r(0, 1);
    for t in &exprs[user].terms {
        if t.a.iter().all(|&x| x == 0) {
            constant += t.c / 2;
        } else {
            map.insert([t.a[0], t.a[1]], t.c);
        }
    }
    (map, constant)
}

/// Sign bit of user 1: one quarter-weighted term per distance.
pub fn check_sign_bit() -> Result<(), String> {
    let e = bit_expression(&[4, 2], 0, 0).map_err(|e| e.to_string())?;
    let mut got: Vec<(Ratio<i64>, Vec<i64>)> = e.terms.iter().map(|t| (t.c, t.a.clone())).collect();
    got.sort_by(|a, b| a.1.cmp(&b.1));
    let want = vec![
        (r(1, 4), D1.to_vec()),
        (r(1, 4), D2.to_vec()),
        (r(1, 4), D3.to_vec()),
        (r(1, 4), D4.to_vec()),
    ];
    if got != want {
        return Err(format!("b11: {got:?}"));
    }
    Ok(())
}

pub fn check_columns() -> Result<(), String> {
    let spec = canonical(&[4, 2]).map_err(|e| e.to_string())?;
    let b11 = column_terms(&spec, 0, 0);
    let b12 = column_terms(&spec, 0, 1);
    let b21 = column_terms(&spec, 1, 0);
    for m in 1..=8 {
        if as_rows(&b11[m - 1].terms) != sorted(b11_column(m)) {
            return Err(format!("b11 column {m}"));
        }
        if as_rows(&b12[m - 1].terms) != sorted(b12_column(m)) {
            return Err(format!("b12 column {m}"));
        }
    }
    for m in [1, 3, 5, 7] {
        let got = &b21[m - 1].terms;
        let signs: Vec<i8> = got.iter().map(|t| t.sign).collect();
        if signs != [1, -1, 1, -1, 1, -1, 1] {
            return Err(format!("b21 column {m}: signs {signs:?}"));
        }
        if as_rows(got) != sorted(b21_column(m)) {
            return Err(format!("b21 column {m}"));
        }
    }
    Ok(())
}

pub fn check_merged() -> Result<(), String> {
    // user 1: average of the sign bit and the second bit, 8 columns each
    let mut raw = Vec::new();
    for m in 1..=8 {
        for (s, a) in b11_column(m).into_iter().chain(b12_column(m)) {
            raw.push((r(s as i64, 16), a));
        }
    }
    if generated(0) != merge(&raw) {
        return Err("user 1 merged expression".into());
    }
    // user 2: the odd columns mirror the even ones
    let raw: Vec<_> = [1, 3, 5, 7]
        .into_iter()
        .flat_map(b21_column)
        .map(|(s, a)| (r(s as i64, 4), a))
        .collect();
    if generated(1) != merge(&raw) {
        return Err("user 2 merged expression".into());
    }
    Ok(())
}

pub fn check_golden_file() -> Result<(), String> {
    let json = expressions_to_json(&extract_ber_terms(&[4, 2]).map_err(|e| e.to_string())?);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/terms_4_2.json");
    let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if json.trim_end() != golden.trim_end() {
        return Err("exported terms differ from the golden file".into());
    }
    Ok(())
}
