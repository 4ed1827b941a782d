//! JSON Schemas for every response body, embedded at build time.

const SCHEMAS: &[(&str, &str)] = &[
    ("error", include_str!("../schema/error.json")),
    ("health", include_str!("../schema/health.json")),
    ("dataset", include_str!("../schema/dataset.json")),
    ("dataset_list", include_str!("../schema/dataset_list.json")),
    ("periodogram", include_str!("../schema/periodogram.json")),
    ("elbow", include_str!("../schema/elbow.json")),
    ("fit_accepted", include_str!("../schema/fit_accepted.json")),
    ("fit", include_str!("../schema/fit.json")),
    ("fit_list", include_str!("../schema/fit_list.json")),
    ("sdf", include_str!("../schema/sdf.json")),
    ("scores", include_str!("../schema/scores.json")),
    ("dendrogram", include_str!("../schema/dendrogram.json")),
    ("clusters", include_str!("../schema/clusters.json")),
    ("compare", include_str!("../schema/compare.json")),
    ("schema_index", include_str!("../schema/schema_index.json")),
];

pub fn names() -> Vec<&'static str> {
    SCHEMAS.iter().map(|(n, _)| *n).collect()
}

pub fn get(name: &str) -> Option<&'static str> {
    SCHEMAS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[cfg(test)]
mod tests {
    #[test]
    fn every_schema_is_json_with_matching_id() {
        for (name, text) in super::SCHEMAS {
            let value: serde_json::Value = serde_json::from_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(value["$id"], format!("{name}.json"), "{name}");
        }
    }
}
