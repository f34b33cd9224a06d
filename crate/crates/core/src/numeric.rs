//! Numeric formatting and exact accumulation.
//!
//! Two small utilities with outsized importance for reproducibility:
//!
//! * [`fmt_sig`] renders every number the crate writes with a fixed number of
//!   significant digits, so that a written file parses back to values that
//!   re-render to the same bytes (the round-trip property the CSV writers
//!   promise).
//! * [`exact_sum`] is an order-independent, correctly rounded floating-point
//!   sum (Shewchuk partials, as in Python's `math.fsum`). The damage ledger
//!   uses it so that national totals grouped by sender and regrouped by
//!   receiver agree bit for bit instead of drifting by rounding.

/// Significant digits used for all numeric CSV/JSON report output.
pub const OUTPUT_SIG_DIGITS: usize = 12;

/// Format `x` with `sig` significant digits in plain positional notation.
///
/// Zero renders as `"0"`; non-finite values render via the default float
/// formatter. Integers larger than `10^sig` keep their exact digits (no
/// rounding is applied past the decimal point).
pub fn fmt_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Derive the decimal exponent from the *rounded* scientific rendering so
    // that values like 0.9999… that round up across a power of ten get the
    // decimal count of their rounded magnitude.
    let sci = format!("{:.*e}", sig - 1, x);
    let exp: i32 = sci[sci.find('e').expect("scientific format") + 1..]
        .parse()
        .expect("scientific exponent");
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Format with the crate-wide default of [`OUTPUT_SIG_DIGITS`] digits.
pub fn fmt_out(x: f64) -> String {
    fmt_sig(x, OUTPUT_SIG_DIGITS)
}

/// Correctly rounded sum of a sequence of floats, independent of order.
///
/// Maintains a list of non-overlapping partials (Shewchuk's algorithm); the
/// final reduction applies the half-even correction so the result is the
/// nearest f64 to the exact real sum. Because the result depends only on the
/// multiset of inputs, regrouping the same addends cannot change it.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        debug_assert!(x.is_finite(), "exact_sum expects finite addends");
        let mut used = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[used] = lo;
                used += 1;
            }
            x = hi;
        }
        partials.truncate(used);
        partials.push(x);
    }

    // Sum from the largest partial down, stopping at the first non-zero
    // rounding error; nudge the result when that error plus the remaining
    // (smaller, same-signed) partials would flip a round-to-even decision.
    let mut n = partials.len();
    let mut hi = 0.0;
    if n > 0 {
        n -= 1;
        hi = partials[n];
        let mut lo;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = partials[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))
                {
                    let y2 = lo * 2.0;
                    let x2 = hi + y2;
                    if y2 == x2 - hi {
                        hi = x2;
                    }
                }
                break;
            }
        }
    }
    hi
}

/// Hex-encoded SHA-256 of a byte string.
///
/// Every run manifest and matrix metadata file stamps outputs with this hash
/// so reruns can be compared without diffing the files themselves.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
