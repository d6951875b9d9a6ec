use std::sync::Arc;

use observatory_core::clock::SimClock;
use observatory_core::model::{GeoResolution, PronounCategory, QualityFlag};
use observatory_core::normalize::{
    bundled_corpus, classify_quality, estimate_monthly_earnings, CassetteGeocoder, GeocodeCache, Geocoder,
    LocationOutcome, Normalizer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::support::ensure;
use crate::Outcome;

fn geo(importance: f64) -> GeoResolution {
    GeoResolution {
        country: "Japan".into(),
        importance,
        resolved_from: "tokyo".into(),
        resolved_at: SimClock::default_start(),
    }
}

pub fn quality_grid() -> Outcome {
    use PronounCategory::*;
    use QualityFlag::*;
    let cases = [
        (Masculine, Some(0.95), High),
        (Feminine, Some(0.800_001), High),
        (OtherNeutral, Some(1.0), High),
        (Masculine, Some(0.8), Medium),
        (Feminine, Some(0.3), Medium),
        (OtherNeutral, None, Medium),
        (Unspecified, Some(0.95), Medium),
        (Unspecified, Some(0.8), Low),
        (Unspecified, Some(0.1), Low),
        (Unspecified, None, Low),
    ];
    for (pronouns, importance, want) in cases {
        let g = importance.map(geo);
        let got = classify_quality(pronouns, g.as_ref());
        ensure(got == want, || format!("{pronouns:?} x {importance:?}: got {got:?}, want {want:?}"))?;
    }
    Ok(format!("{} cells, importance 0.8 is not High", cases.len()))
}

pub fn earnings() -> Outcome {
    const TRIALS: usize = 10_000;
    const MIN_TIERS: [i64; 6] = [100, 300, 500, 1_000, 2_500, 10_000];
    let mut rng = ChaCha8Rng::seed_from_u64(0xea4e);
    let mut equal = 0;
    for trial in 0..TRIALS {
        let min_tier = MIN_TIERS[rng.random_range(0..MIN_TIERS.len())];
        let sponsors = rng.random_range(0..=60);
        // A quarter of the trials keep every sponsor on the minimum tier.
        let p_min = if rng.random_bool(0.25) { 1.0 } else { rng.random_range(0.0..1.0) };
        let mut truth = 0i64;
        let mut all_min = true;
        for _ in 0..sponsors {
            let tier = if rng.random_bool(p_min) {
                min_tier
            } else {
                all_min = false;
                min_tier + 100 * rng.random_range(1..=50)
            };
            truth += tier;
        }
        let estimate = estimate_monthly_earnings(Some(min_tier), sponsors).ok_or("no estimate")?;
        ensure(estimate <= truth, || format!("trial {trial}: {estimate} > {truth}"))?;
        ensure((estimate == truth) == all_min, || {
            format!("trial {trial}: estimate {estimate}, truth {truth}, all minimum {all_min}")
        })?;
        equal += usize::from(estimate == truth);
    }
    Ok(format!("{TRIALS} trials, {equal} exact (all minimum tier)"))
}

pub fn geocoding_corpus() -> Outcome {
    let now = SimClock::default_start();
    let corpus = bundled_corpus();
    let resolvable = corpus.iter().filter(|e| e.country.is_some()).count();
    ensure(resolvable >= 23, || format!("only {resolvable} resolvable variants"))?;
    let mut silent = 0;
    for entry in &corpus {
        let geocoder = Arc::new(CassetteGeocoder::bundled());
        let normalizer = Normalizer::new(geocoder.clone(), Arc::new(GeocodeCache::new()));
        let result = normalizer.normalize_location(&entry.raw, now).map_err(|e| format!("{:?}: {e}", entry.raw))?;
        match &entry.country {
            Some(country) => {
                let got = result.geo().map(|g| g.country.as_str());
                ensure(got == Some(country.as_str()), || format!("{:?} -> {got:?}, want {country}", entry.raw))?;
            }
            None => {
                let skipped = matches!(result.outcome, LocationOutcome::PrivacyString | LocationOutcome::Empty);
                ensure(skipped && geocoder.calls() == 0, || {
                    format!("{:?} -> {:?} after {} calls", entry.raw, result.outcome, geocoder.calls())
                })?;
                silent += 1;
            }
        }
    }
    Ok(format!("{resolvable} variants resolved, {silent} privacy/empty strings made no calls"))
}
