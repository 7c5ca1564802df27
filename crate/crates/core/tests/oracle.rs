//! Closed-form SINR and MSE against a symbol-level simulation.

mod common;

use isac_core::optimizer::{evaluate, mse, stream_terms};
use isac_core::rng::stream;

#[test]
fn closed_form_matches_symbol_simulation() {
    let mut rng = stream(3, "oracle");
    for _ in 0..3 {
        let cfg = common::random_config(&mut rng, 8, &[3, 2], 2, 2);
        let (sinr_mc, mse_mc) = common::monte_carlo(&cfg.state, &cfg.links, 40_000, &mut rng);
        let (sinr, mse) = evaluate(&cfg.state, &cfg.links);
        for s in 0..sinr.len() {
            let es = (sinr_mc[s] - sinr[s]).abs() / sinr[s];
            let em = (mse_mc[s] - mse[s]).abs() / mse[s];
            assert!(
                es < 0.04,
                "stream {s}: SINR {} vs simulated {} ({:.2}%)",
                sinr[s],
                sinr_mc[s],
                100.0 * es
            );
            assert!(
                em < 0.02,
                "stream {s}: MSE {} vs simulated {} ({:.2}%)",
                mse[s],
                mse_mc[s],
                100.0 * em
            );
        }
    }
}

#[test]
fn mse_decomposes_into_its_terms() {
    let mut rng = stream(4, "oracle/terms");
    let cfg = common::random_config(&mut rng, 8, &[2, 2], 1, 3);
    for s in 0..cfg.state.streams.len() {
        let t = stream_terms(&cfg.state, &cfg.links, s);
        let expected = (t.signal - 1.0).norm_sqr() + t.inter_mode + t.inter_user + t.jamming + t.noise;
        assert!((mse(&cfg.state, &cfg.links, s) - expected).abs() < 1e-12);
        assert!(t.jamming > 0.0 && t.noise > 0.0);
    }
}
