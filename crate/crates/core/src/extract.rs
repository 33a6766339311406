//! Pulls the first balanced `{...}` object out of free-form model output.

/// Byte range of the first balanced object, honouring JSON string escapes.
/// Returns `None` when no opening brace is ever closed.
pub fn first_object(raw: &str) -> Option<&str> {
    let open = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, b) in raw.bytes().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[open..=i]);
                }
            }
            _ => {}
        }
    }
    None
}
