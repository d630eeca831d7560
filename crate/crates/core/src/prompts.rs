//! Versioned instruction templates and parsing of describer answers.

use crate::model::ObjectKind;
use crate::providers::{DescribeKind, VocabularyEntry};

pub const TEMPLATE_VERSION: &str = "v1";

const GUIDE: &str = include_str!("../resources/prompts/v1/guide.txt");
const TEXTURE: &str = include_str!("../resources/prompts/v1/texture.txt");
const OBJECT_APPEARANCE: &str = include_str!("../resources/prompts/v1/object_appearance.txt");
const COMMON_OBJECTS: &str = include_str!("../resources/prompts/v1/common_objects.txt");
const OBJECTS_IN_IMAGE: &str = include_str!("../resources/prompts/v1/objects_in_image.txt");
const SURFACE_TEXTURE: &str = include_str!("../resources/prompts/v1/surface_texture.txt");
const JUDGE_INPAINT: &str = include_str!("../resources/prompts/v1/judge_inpaint.txt");
const PICK_BEST_CROP: &str = include_str!("../resources/prompts/v1/pick_best_crop.txt");

/// Leading words of every texture prompt; lets providers tell texture
/// requests from scene requests.
pub const TEXTURE_MARKER: &str = "seamless tileable texture";

/// Words that must not appear in an appearance description.
pub const FORBIDDEN_APPEARANCE_WORDS: &[&str] = &[
    "background",
    "viewpoint",
    "camera",
    "perspective",
    "isometric",
    "lighting",
    "angle",
];

pub fn describe_template(kind: DescribeKind) -> &'static str {
    match kind {
        DescribeKind::ObjectAppearance => OBJECT_APPEARANCE,
        DescribeKind::CommonObjectsForScene => COMMON_OBJECTS,
        DescribeKind::ObjectsInImage => OBJECTS_IN_IMAGE,
        DescribeKind::SurfaceTexture => SURFACE_TEXTURE,
        DescribeKind::JudgeInpaint => JUDGE_INPAINT,
        DescribeKind::PickBestCrop => PICK_BEST_CROP,
    }
}

pub fn guide_prompt(prompt: &str) -> String {
    GUIDE.trim_end().replace("{prompt}", prompt.trim())
}

pub fn texture_prompt(description: &str) -> String {
    TEXTURE.trim_end().replace("{description}", description.trim())
}

/// Drops every sentence that mentions a forbidden word. Returns `None` when
/// nothing usable is left.
pub fn sanitize_appearance(text: &str) -> Option<String> {
    let kept: Vec<&str> = text
        .split_inclusive(['.', ';', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .filter(|s| {
            let lower = s.to_lowercase();
            !FORBIDDEN_APPEARANCE_WORDS.iter().any(|w| lower.contains(w))
        })
        .collect();
    let out = kept.join(" ");
    let out = out.trim();
    if out.chars().any(char::is_alphanumeric) {
        Some(out.to_string())
    } else {
        None
    }
}

/// Parses `furniture: <name>` / `decor: <name>` lines. Other lines are
/// ignored; `None` if no line parses.
pub fn parse_object_list(text: &str) -> Option<Vec<VocabularyEntry>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim().trim_start_matches(['-', '*', ' ']);
        let Some((kind, label)) = line.split_once(':') else {
            continue;
        };
        let Ok(kind) = kind.trim().parse::<ObjectKind>() else {
            continue;
        };
        let label = label.trim().trim_matches(['"', '.', ',']).to_lowercase();
        if !label.is_empty() {
            out.push(VocabularyEntry { label, kind });
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

/// Floor and wall material descriptions from a surface answer.
pub fn parse_surfaces(text: &str) -> Option<(String, String)> {
    let mut floor = None;
    let mut wall = None;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once(':') {
            let v = v.trim().to_string();
            match k.trim().to_lowercase().as_str() {
                "floor" if !v.is_empty() => floor = Some(v),
                "wall" | "walls" if !v.is_empty() => wall = Some(v),
                _ => {}
            }
        }
    }
    Some((floor?, wall?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guide_template_wording() {
        assert_eq!(
            guide_prompt("a cozy bedroom"),
            "isometric view of a cozy bedroom, full scene, white background, no humans"
        );
        assert!(texture_prompt("oak planks").starts_with(TEXTURE_MARKER));
    }

    #[test]
    fn appearance_strips_viewpoint_sentences() {
        let t = "A low wooden bed with a white duvet. It is seen from an isometric camera. The background is white.";
        assert_eq!(sanitize_appearance(t).unwrap(), "A low wooden bed with a white duvet.");
        assert!(sanitize_appearance("Shown against a white background.").is_none());
    }

    #[test]
    fn object_list_parsing() {
        let v = parse_object_list("furniture: Bed\n- decor: lamp.\nnonsense\nplant: fern\n").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].label, "bed");
        assert_eq!(v[1].kind, ObjectKind::Decor);
        assert!(parse_object_list("I cannot help with that").is_none());
    }

    #[test]
    fn surfaces() {
        assert_eq!(
            parse_surfaces("floor: oak planks\nwall: beige plaster").unwrap(),
            ("oak planks".into(), "beige plaster".into())
        );
        assert!(parse_surfaces("floor: oak").is_none());
    }
}
