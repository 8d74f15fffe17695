//! Minimal dotted-path extraction over JSON values.
//!
//! Paths look like `list[].openid` or `data.poi_list[].poi_id`: segments are
//! object keys, a trailing `[]` on a segment fans out over array elements.
//! Only scalar leaves (strings, numbers, booleans) are collected.

use serde_json::Value;

pub fn extract<'a>(value: &'a Value, path: &str) -> Vec<String> {
    let mut frontier = vec![value];
    for raw_seg in path.split('.') {
        let (key, fan_out) = match raw_seg.strip_suffix("[]") {
            Some(k) => (k, true),
            None => (raw_seg, false),
        };
        let mut next = Vec::new();
        for v in frontier {
            let stepped = if key.is_empty() { Some(v) } else { v.get(key) };
            let Some(stepped) = stepped else { continue };
            if fan_out {
                if let Value::Array(items) = stepped {
                    next.extend(items.iter());
                }
            } else {
                next.push(stepped);
            }
        }
        frontier = next;
    }
    frontier
        .into_iter()
        .filter_map(|v| match v {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            Value::Bool(b) => Some(b.to_string()),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn scalar_leaf() {
        let v = json!({"activity_id": "act-1"});
        assert_eq!(extract(&v, "activity_id"), vec!["act-1"]);
    }

    #[test]
    fn array_fan_out() {
        let v = json!({"list": [{"openid": "o1"}, {"openid": "o2"}, {"other": 1}]});
        assert_eq!(extract(&v, "list[].openid"), vec!["o1", "o2"]);
    }

    #[test]
    fn nested_path() {
        let v = json!({"data": {"poi_list": [{"poi_id": 7}]}});
        assert_eq!(extract(&v, "data.poi_list[].poi_id"), vec!["7"]);
    }

    #[test]
    fn missing_path_yields_nothing() {
        let v = json!({"a": 1});
        assert!(extract(&v, "b[].c").is_empty());
    }
}
