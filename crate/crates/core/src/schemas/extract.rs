//! Lenient pre-pass applied before strict schema validation.
//!
//! Small models often wrap their JSON in markdown fences or surround it with
//! prose. The pre-pass strips fences and returns the first balanced `{...}`
//! object. There is exactly one recovery pass; nothing inside the object is
//! repaired.

/// Removes a leading and trailing markdown code fence, if present.
pub fn strip_code_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // drop the info string (```json)
    let body = match rest.find('\n') {
        Some(nl) => &rest[nl + 1..],
        None => rest,
    };
    let body = body.trim_end();
    body.strip_suffix("```").unwrap_or(body).trim()
}

/// Returns the first balanced JSON object in `raw`, scanning past string
/// literals so braces inside strings do not count.
pub fn first_balanced_object(raw: &str) -> Option<&str> {
    let text = strip_code_fences(raw);
    let bytes = text.as_bytes();
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=start + offset]);
                }
            }
            _ => {}
        }
    }
    None
}
