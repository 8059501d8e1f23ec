//! Name normalization shared by event chains, rules and alias resolution.

/// Lowercases `text`, collapses every run of non-alphanumeric characters into
/// a single hyphen and trims hyphens from both ends.
///
/// `"Pedestrian (camera) detected"` becomes `"pedestrian-camera-detected"`.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_sep = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('-');
            }
            pending_sep = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_sep = true;
        }
    }
    out
}
