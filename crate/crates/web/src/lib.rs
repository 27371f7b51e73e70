//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes and returns JSON text so the page needs no generated
//! TypeScript types. Errors come back as `{"error": "..."}`.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use cfgsmith_core::clustering::{xmeans, ClusteringParams};
use cfgsmith_core::features::{extract_features, normalize_columns, FeatureCatalog};
use cfgsmith_core::planner::{draw_decisions, Strategy};
use cfgsmith_core::rng;

fn respond<T: Serialize>(result: cfgsmith_core::Result<T>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).expect("serializable"),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn bad_input(e: serde_json::Error) -> cfgsmith_core::Error {
    cfgsmith_core::Error::Validation(format!("bad input: {e}"))
}

#[derive(Serialize)]
struct Clustering {
    k: usize,
    centroids: Vec<Vec<f64>>,
    sizes: Vec<usize>,
    assignment: Vec<usize>,
    sse: f64,
}

/// Clusters `points_json` (an array of equal-length number arrays) with
/// X-Means after min-max normalization. Centroids are reported in the
/// normalized space.
#[wasm_bindgen]
pub fn cluster(points_json: &str, k_min: usize, k_max: usize, seed: u64) -> String {
    respond((|| {
        let points: Vec<Vec<f64>> = serde_json::from_str(points_json).map_err(bad_input)?;
        let params = ClusteringParams {
            k_min,
            k_max,
            rng_seed: seed,
            ..ClusteringParams::default()
        };
        let model = xmeans(&normalize_columns(&points), &params)?;
        Ok(Clustering {
            k: model.k(),
            centroids: model.centroids,
            sizes: model.sizes,
            assignment: model.assignment,
            sse: model.sse,
        })
    })())
}

/// Feature counts of one C source under the built-in catalog, as
/// `[{"name": ..., "count": ...}, ...]` in catalog order.
#[wasm_bindgen]
pub fn features(source: &str) -> String {
    respond((|| {
        let catalog = FeatureCatalog::builtin();
        let v = extract_features("input", source.as_bytes(), &catalog)?;
        Ok(catalog
            .names()
            .zip(v.counts)
            .map(|(name, count)| json!({ "name": name, "count": count }))
            .collect::<Vec<_>>())
    })())
}

/// Draws `count` configurations from a centroid (inclusion probabilities)
/// for trials `0..count` of a campaign seeded with `master_seed`. Returns the
/// decisions and the observed inclusion frequency of each feature.
#[wasm_bindgen]
pub fn sample(centroid_json: &str, count: u32, master_seed: u64) -> String {
    respond((|| {
        let centroid: Vec<f64> = serde_json::from_str(centroid_json).map_err(bad_input)?;
        let mut frequency = vec![0.0; centroid.len()];
        let mut configs = Vec::new();
        for t in 0..u64::from(count) {
            let seed = rng::trial_seed(master_seed, t);
            let d = draw_decisions(Strategy::RoundRobin, Some(&centroid), centroid.len(), seed)?;
            for (f, &on) in frequency.iter_mut().zip(&d) {
                *f += f64::from(u8::from(on));
            }
            configs.push(d);
        }
        frequency.iter_mut().for_each(|f| *f /= f64::from(count.max(1)));
        Ok(json!({ "configs": configs, "frequency": frequency }))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_two_groups() {
        let out: serde_json::Value =
            serde_json::from_str(&cluster("[[0,0],[0,1],[1,0],[10,10],[10,11],[11,10]]", 1, 8, 0)).unwrap();
        assert_eq!(out["k"], 2);
        assert_eq!(out["sizes"], json!([3, 3]));
    }

    #[test]
    fn errors_are_json() {
        let out: serde_json::Value = serde_json::from_str(&cluster("not json", 1, 2, 0)).unwrap();
        assert!(out["error"].as_str().unwrap().contains("bad input"));
        let out: serde_json::Value = serde_json::from_str(&sample("[1.5]", 3, 0)).unwrap();
        assert!(out["error"].is_string());
    }

    #[test]
    fn features_in_catalog_order() {
        let out: serde_json::Value =
            serde_json::from_str(&features("volatile int x; union u { int a; };")).unwrap();
        let rows = out.as_array().unwrap();
        assert_eq!(rows.len(), FeatureCatalog::builtin().len());
        let count = |n: &str| rows.iter().find(|r| r["name"] == n).unwrap()["count"].as_u64().unwrap();
        assert_eq!(count("volatiles"), 1);
        assert_eq!(count("unions"), 1);
    }

    #[test]
    fn sample_extremes_are_exact() {
        let out: serde_json::Value = serde_json::from_str(&sample("[0, 1]", 50, 3)).unwrap();
        assert_eq!(out["frequency"], json!([0.0, 1.0]));
    }
}
