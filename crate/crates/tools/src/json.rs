//! Canonical JSON: sorted keys, shortest round-trip floats, no `-0.0`.

use serde_json::Value;

/// Rewrites `-0.0` as `0.0` everywhere in `v`.
pub fn normalize(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if f == 0.0 && f.is_sign_negative() {
                    *v = Value::from(0.0);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(normalize),
        Value::Object(map) => map.values_mut().for_each(normalize),
        _ => {}
    }
}

/// Serializes with keys in sorted order. serde_json's default map is a
/// BTreeMap, so ordering falls out of the type.
pub fn canonical_string(v: &Value) -> String {
    let mut v = v.clone();
    normalize(&mut v);
    serde_json::to_string(&v).expect("Value always serializes")
}

/// Follows a dotted path such as `output.roots.0.re`; numeric segments
/// index arrays.
pub fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |cur, seg| match cur {
        Value::Object(map) => map.get(seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_negative_zero_dropped() {
        let v = json!({"b": -0.0, "a": [1, 2.5]});
        assert_eq!(canonical_string(&v), r#"{"a":[1,2.5],"b":0.0}"#);
    }

    #[test]
    fn dotted_lookup() {
        let v = json!({"output": {"roots": [{"re": 1.0}]}});
        assert_eq!(lookup(&v, "output.roots.0.re"), Some(&json!(1.0)));
        assert_eq!(lookup(&v, "output.missing"), None);
    }
}
