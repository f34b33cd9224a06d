//! Randomized invariants for the scoring, instrument, and numeric kernels.
//!
//! Property tests state the laws each primitive promises — monotone decay,
//! hard cutoffs, antisymmetry, linearity, permutation invariance — and let
//! proptest hunt for counterexamples.

use std::collections::BTreeMap;

use downwind_core::aoe::{decay_score, score_receiver, ScoreParams, WindBins};
use downwind_core::geo::LonLat;
use downwind_core::ingest::{TradeFlow, TradeTable, YearSeries};
use downwind_core::numeric::exact_sum;
use downwind_core::shiftshare::{build_iv_with_shocks, dh_growth, fdr_adjust};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

fn score_params() -> impl Strategy<Value = ScoreParams> {
    (
        0.05f64..2.0,
        0.05f64..2.0,
        0.05f64..2.0,
        0.5f64..4.0,
        0.0f64..0.5,
        0.1f64..1.5,
    )
        .prop_map(|(alpha, beta, gamma, rad0, rad_inc, max_offaxis)| ScoreParams {
            alpha,
            beta,
            gamma,
            rad0,
            rad_inc,
            max_offaxis,
            ..ScoreParams::default()
        })
}

/// A latitude band where spherical distortion stays mild but non-trivial.
fn lat() -> impl Strategy<Value = f64> {
    -55.0f64..55.0
}

fn lon() -> impl Strategy<Value = f64> {
    -150.0f64..150.0
}

// ---------------------------------------------------------------------------
// Score law
// ---------------------------------------------------------------------------

proptest! {
    /// The kernel lives in (0, 1] for non-negative arguments and decays
    /// strictly in every argument separately.
    #[test]
    fn decay_score_is_a_strict_decay(
        params in score_params(),
        rad in 0.0f64..10.0,
        offaxis in 0.0f64..10.0,
        dist in 0.0f64..10.0,
        bump in 0.01f64..5.0,
    ) {
        let base = decay_score(&params, rad, offaxis, dist);
        prop_assert!(base > 0.0 && base <= 1.0, "base score {base}");
        prop_assert!(decay_score(&params, rad + bump, offaxis, dist) < base);
        prop_assert!(decay_score(&params, rad, offaxis + bump, dist) < base);
        prop_assert!(decay_score(&params, rad, offaxis, dist + bump) < base);
    }

    /// The kernel factorizes: exp of a sum is the product of the exps.
    #[test]
    fn decay_score_factorizes(
        params in score_params(),
        rad in 0.0f64..8.0,
        offaxis in 0.0f64..8.0,
        dist in 0.0f64..8.0,
    ) {
        let whole = decay_score(&params, rad, offaxis, dist);
        let parts = decay_score(&params, rad, 0.0, 0.0)
            * decay_score(&params, 0.0, offaxis, 0.0)
            * decay_score(&params, 0.0, 0.0, dist);
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(parts));
    }

    /// Calm air deposits nothing anywhere, even on the parcel itself.
    #[test]
    fn calm_wind_never_scores(
        params in score_params(),
        plon in lon(), plat in lat(),
        rlon in lon(), rlat in lat(),
        scale in 0.0f64..1.0,
    ) {
        let pos = LonLat::new(plon, plat);
        let receiver = LonLat::new(rlon, rlat);
        // Anything strictly below the calm threshold, including zero.
        let w = params.calm_speed * scale * 0.99;
        prop_assert!(score_receiver(&params, pos, 5.0, (w, 0.0), receiver).is_none());
        prop_assert!(score_receiver(&params, pos, 5.0, (0.0, 0.0), pos).is_none());
    }

    /// Outside the search radius the score is a hard zero, not a small one;
    /// inside it, a receiver straight downwind always scores.
    #[test]
    fn radius_cutoff_is_hard(
        params in score_params(),
        plon in -60.0f64..60.0, plat in -50.0f64..50.0,
        dlon in -3.0f64..3.0, dlat in -3.0f64..3.0,
        speed in 0.5f64..20.0,
    ) {
        let pos = LonLat::new(plon, plat);
        let receiver = LonLat::new(plon + dlon, plat + dlat);
        let dist = downwind_core::geo::central_angle_deg(pos, receiver);
        prop_assume!(dist > 1e-3);
        // Wind blowing exactly along the displacement keeps the receiver
        // perfectly on-axis, so only the radius rule decides.
        let norm = (dlon * dlon + dlat * dlat).sqrt();
        let wind = (speed * dlon / norm, speed * dlat / norm);
        prop_assert!(
            score_receiver(&params, pos, dist * 0.999, wind, receiver).is_none(),
            "receiver at {dist} deg scored inside radius {}", dist * 0.999
        );
        let got = score_receiver(&params, pos, dist * 1.001, wind, receiver);
        prop_assert!(got.is_some(), "on-axis receiver at {dist} deg missed");
        prop_assert!(got.unwrap() > 0.0);
    }

    /// The angular gate: rotate the wind away from the displacement and the
    /// score vanishes exactly when the rotation passes the cutoff.
    #[test]
    fn offaxis_cutoff_is_hard(
        params in score_params(),
        plon in -60.0f64..60.0, plat in -50.0f64..50.0,
        dlon in -2.0f64..2.0, dlat in -2.0f64..2.0,
        speed in 0.5f64..20.0,
        margin in 0.02f64..0.08,
        side in proptest::bool::ANY,
    ) {
        let pos = LonLat::new(plon, plat);
        let receiver = LonLat::new(plon + dlon, plat + dlat);
        let norm = (dlon * dlon + dlat * dlat).sqrt();
        prop_assume!(norm > 1e-3);
        let dist = downwind_core::geo::central_angle_deg(pos, receiver);
        let rad = dist + 1.0;
        let rotate = |phi: f64| -> (f64, f64) {
            let (s, c) = phi.sin_cos();
            (
                speed * (dlon * c - dlat * s) / norm,
                speed * (dlon * s + dlat * c) / norm,
            )
        };
        let sign = if side { 1.0 } else { -1.0 };
        let inside = params.max_offaxis - margin;
        let outside = params.max_offaxis + margin;
        prop_assume!(inside > 0.0 && outside < std::f64::consts::PI - 0.05);
        prop_assert!(
            score_receiver(&params, pos, rad, rotate(sign * inside), receiver).is_some(),
            "wind {inside} rad off-axis should still deposit"
        );
        prop_assert!(
            score_receiver(&params, pos, rad, rotate(sign * outside), receiver).is_none(),
            "wind {outside} rad off-axis should be gated"
        );
    }

    /// A receiver coincident with the parcel has no off-axis offset and no
    /// distance; the score is exactly the radius factor.
    #[test]
    fn coincident_receiver_scores_radius_factor(
        params in score_params(),
        plon in lon(), plat in lat(),
        u in 0.5f64..20.0, v in -10.0f64..10.0,
        rad in 0.5f64..6.0,
    ) {
        let pos = LonLat::new(plon, plat);
        let got = score_receiver(&params, pos, rad, (u, v), pos).unwrap();
        let want = (-params.alpha * rad).exp();
        prop_assert!((got - want).abs() <= 1e-15 * want.max(got));
    }
}

// ---------------------------------------------------------------------------
// Growth rates and instruments
// ---------------------------------------------------------------------------

proptest! {
    /// The symmetric growth rate is bounded by ±2, antisymmetric to the
    /// bit, and pins the endpoints exactly.
    #[test]
    fn dh_growth_bounds_and_antisymmetry(
        a in 0.0f64..1e12,
        b in 0.0f64..1e12,
    ) {
        prop_assume!(a > 0.0 || b > 0.0);
        let g = dh_growth(a, b).unwrap();
        prop_assert!((-2.0..=2.0).contains(&g), "growth {g} out of range");
        let back = dh_growth(b, a).unwrap();
        prop_assert_eq!(g.to_bits(), (-back).to_bits(), "antisymmetry broke");
        if a == 0.0 {
            prop_assert_eq!(g, 2.0);
        }
        if b == 0.0 {
            prop_assert_eq!(g, -2.0);
        }
        if a == b {
            prop_assert_eq!(g, 0.0);
        }
    }

    /// The instrument is linear in the shocks: doubling every shock doubles
    /// every instrument value bit for bit, and shocks add.
    #[test]
    fn instrument_is_linear_in_shocks(
        flows in proptest::collection::vec(
            (0u8..4, 0u8..3, 0.0f64..1e6),
            6..18,
        ),
        shocks in proptest::collection::vec(-3.0f64..3.0, 3),
        pops in proptest::collection::vec(1.0f64..1e7, 4),
    ) {
        let rows: Vec<TradeFlow> = flows
            .iter()
            .enumerate()
            .map(|(i, &(r, p, value))| TradeFlow {
                region: format!("R{r}"),
                product: format!("P{p}"),
                // Spread duplicate (region, product, year) triples apart.
                year: 2000 + (i / 12) as i32,
                export_value: value,
            })
            .collect();
        // Deduplicate identical keys by keeping the first occurrence.
        let mut seen = std::collections::BTreeSet::new();
        let rows: Vec<TradeFlow> = rows
            .into_iter()
            .filter(|f| seen.insert((f.region.clone(), f.product.clone(), f.year)))
            .collect();
        let trade = TradeTable::new(rows).unwrap();
        let years: Vec<i32> = (2000..=2001).collect();
        let mut pop = YearSeries::new();
        for r in 0..4 {
            for &y in &years {
                pop.insert((format!("R{r}"), y), pops[r as usize]);
            }
        }
        let base: BTreeMap<String, f64> = (0..3)
            .map(|p| (format!("P{p}"), shocks[p as usize]))
            .collect();
        let doubled: BTreeMap<String, f64> =
            base.iter().map(|(k, &v)| (k.clone(), 2.0 * v)).collect();
        let zero: BTreeMap<String, f64> =
            base.keys().map(|k| (k.clone(), 0.0)).collect();

        let iv1 = build_iv_with_shocks(&trade, &base, &pop, 1, &years).unwrap();
        let iv2 = build_iv_with_shocks(&trade, &doubled, &pop, 1, &years).unwrap();
        let iv0 = build_iv_with_shocks(&trade, &zero, &pop, 1, &years).unwrap();
        prop_assert_eq!(iv1.len(), iv2.len());
        for (key, &v) in &iv1 {
            // Scaling by a power of two is exact in binary floating point.
            prop_assert_eq!((2.0 * v).to_bits(), iv2[key].to_bits());
            prop_assert_eq!(iv0[key], 0.0);
        }
    }

    /// Adjusted p-values dominate the raw ones, never exceed one, are
    /// monotone along the sorted order, and permuting the input permutes
    /// the output.
    #[test]
    fn fdr_adjustment_laws(
        pvals in proptest::collection::vec(0.0f64..=1.0, 1..40),
        rot in 0usize..40,
    ) {
        let q = fdr_adjust(&pvals).unwrap();
        prop_assert_eq!(q.len(), pvals.len());
        for (pi, qi) in pvals.iter().zip(&q) {
            prop_assert!(qi >= pi && *qi <= 1.0, "q {qi} vs p {pi}");
        }
        let mut order: Vec<usize> = (0..pvals.len()).collect();
        order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
        for w in order.windows(2) {
            prop_assert!(q[w[0]] <= q[w[1]] + 1e-15);
        }
        // The largest p-value is its own q-value, identically.
        let top = *order.last().unwrap();
        prop_assert_eq!(q[top].to_bits(), pvals[top].to_bits());

        // Equivariance under rotation of the inputs.
        let k = rot % pvals.len();
        let rotated: Vec<f64> = (0..pvals.len())
            .map(|i| pvals[(i + k) % pvals.len()])
            .collect();
        let q_rot = fdr_adjust(&rotated).unwrap();
        for i in 0..pvals.len() {
            prop_assert_eq!(q_rot[i].to_bits(), q[(i + k) % pvals.len()].to_bits());
        }
    }
}

// ---------------------------------------------------------------------------
// Exact summation
// ---------------------------------------------------------------------------

/// Fisher–Yates with a splitmix stream, for permutation properties.
fn shuffled(values: &[f64], mut state: u64) -> Vec<f64> {
    let mut next = || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut out = values.to_vec();
    for i in (1..out.len()).rev() {
        let j = (next() % (i as u64 + 1)) as usize;
        out.swap(i, j);
    }
    out
}

proptest! {
    /// The order-independent sum really is order-independent, to the bit,
    /// and exactly cancels matched positives and negatives.
    #[test]
    fn exact_sum_is_permutation_invariant(
        values in proptest::collection::vec(-1e15f64..1e15, 0..60),
        seed in proptest::num::u64::ANY,
    ) {
        let a = exact_sum(values.iter().copied());
        let b = exact_sum(shuffled(&values, seed).into_iter());
        prop_assert_eq!(a.to_bits(), b.to_bits());

        let mut mirrored: Vec<f64> = values.iter().flat_map(|&v| [v, -v]).collect();
        mirrored = shuffled(&mirrored, seed ^ 0xABCD);
        prop_assert_eq!(exact_sum(mirrored.into_iter()), 0.0);
    }

    /// On integer-valued inputs the sum is exact: it matches 128-bit
    /// integer arithmetic, no matter how badly the magnitudes mix.
    #[test]
    fn exact_sum_matches_integer_arithmetic(
        ints in proptest::collection::vec(-(1i64 << 40)..(1i64 << 40), 1..50),
    ) {
        let floats: Vec<f64> = ints.iter().map(|&i| i as f64).collect();
        let want: i128 = ints.iter().map(|&i| i as i128).sum();
        let got = exact_sum(floats.into_iter());
        prop_assert_eq!(got, want as f64);
    }
}

// ---------------------------------------------------------------------------
// Decile bins
// ---------------------------------------------------------------------------

proptest! {
    /// Bin assignment is monotone in the score, sends exact zeros to the
    /// calm bin, resolves ties toward the weaker bin, and tops out at 10.
    #[test]
    fn bin_assignment_is_monotone_with_weak_ties(
        mut cuts in proptest::collection::vec(1e-9f64..1e3, 9),
        scores in proptest::collection::vec(0.0f64..1.2e3, 0..30),
        pick in 0usize..9,
    ) {
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        prop_assume!(cuts.len() == 9);
        let bins = WindBins { cuts: cuts.clone() };

        prop_assert_eq!(bins.assign(0.0).unwrap(), 0);
        prop_assert!(bins.assign(-1.0).is_err());
        prop_assert_eq!(bins.assign(cuts[8] + 1.0).unwrap(), 10);

        // A score exactly on a cut belongs to the weaker side.
        prop_assert_eq!(bins.assign(cuts[pick]).unwrap(), pick + 1);

        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let assigned: Vec<usize> = sorted
            .iter()
            .map(|&s| bins.assign(s).unwrap())
            .collect();
        for w in assigned.windows(2) {
            prop_assert!(w[0] <= w[1], "bins not monotone: {w:?}");
        }
        for (&s, &b) in sorted.iter().zip(&assigned) {
            prop_assert!(b <= 10);
            if s == 0.0 {
                prop_assert_eq!(b, 0);
            } else {
                prop_assert!(b >= 1);
            }
        }
    }
}
