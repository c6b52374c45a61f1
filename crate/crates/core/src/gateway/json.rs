use serde_json::{Map, Value};

/// Finds the first JSON object embedded in `text`, skipping surrounding prose
/// and markdown code fences.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    for (start, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(obj))) = stream.next() {
            return Some(obj);
        }
        if let Some(obj) = without_line_comments(&text[start..]) {
            return Some(obj);
        }
    }
    None
}

// Models sometimes echo `// ...` annotations from the template into their JSON.
fn without_line_comments(text: &str) -> Option<Map<String, Value>> {
    if !text.contains("//") {
        return None;
    }
    let mut cleaned = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_string = false;
        let mut escaped = false;
        let mut cut = line.len();
        let bytes = line.as_bytes();
        for (i, &b) in bytes.iter().enumerate() {
            if escaped {
                escaped = false;
                continue;
            }
            match b {
                b'\\' if in_string => escaped = true,
                b'"' => in_string = !in_string,
                b'/' if !in_string && bytes.get(i + 1) == Some(&b'/') => {
                    cut = i;
                    break;
                }
                _ => {}
            }
        }
        cleaned.push_str(&line[..cut]);
        cleaned.push('\n');
    }
    let mut stream = serde_json::Deserializer::from_str(&cleaned).into_iter::<Value>();
    match stream.next() {
        Some(Ok(Value::Object(obj))) => Some(obj),
        _ => None,
    }
}
