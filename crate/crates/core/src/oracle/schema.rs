//! Strict validation of oracle responses.
//!
//! Responses are parsed into a JSON tree, checked key-by-key, and only then
//! converted to typed values. Unknown keys are rejected. Errors carry a
//! JSONPath-like location such as `$.views[0].parts[1].bbox[0][2]`.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use super::{
    DensityEstimate, GridBox, JudgeScore, MaskVerdict, MaterialChoice, OracleError, PartProposal,
    Pixel, ViewParts, GRID_SIZE,
};

type Res<T> = Result<T, OracleError>;

fn parse_root(text: &str) -> Res<Value> {
    serde_json::from_str(text).map_err(|e| OracleError::MalformedJson(e.to_string()))
}

fn object<'a>(v: &'a Value, path: &str, keys: &[&str]) -> Res<&'a Map<String, Value>> {
    let map = v.as_object().ok_or_else(|| OracleError::schema(path, "expected object"))?;
    for k in map.keys() {
        if !keys.contains(&k.as_str()) {
            return Err(OracleError::schema(format!("{path}.{k}"), "unexpected field"));
        }
    }
    for k in keys {
        if !map.contains_key(*k) {
            return Err(OracleError::schema(format!("{path}.{k}"), "missing field"));
        }
    }
    Ok(map)
}

fn string(v: &Value, path: &str) -> Res<String> {
    v.as_str().map(str::to_owned).ok_or_else(|| OracleError::schema(path, "expected string"))
}

fn array<'a>(v: &'a Value, path: &str) -> Res<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| OracleError::schema(path, "expected array"))
}

fn finite_number(v: &Value, path: &str) -> Res<f64> {
    match v.as_f64() {
        Some(x) if v.is_number() && x.is_finite() => Ok(x),
        _ => Err(OracleError::schema(path, "expected a finite number")),
    }
}

fn grid_coord(v: &Value, path: &str) -> Res<u32> {
    if let Some(i) = v.as_i64() {
        if !(0..=GRID_SIZE as i64).contains(&i) {
            return Err(OracleError::schema(path, "coordinate out of 0..1000"));
        }
        return Ok(i as u32);
    }
    if v.as_u64().is_some() {
        return Err(OracleError::schema(path, "coordinate out of 0..1000"));
    }
    Err(OracleError::schema(path, "expected integer coordinate"))
}

fn grid_box(v: &Value, path: &str) -> Res<GridBox> {
    let a = array(v, path)?;
    if a.len() != 4 {
        return Err(OracleError::schema(path, "expected [ymin, xmin, ymax, xmax]"));
    }
    let mut c = [0u32; 4];
    for (i, x) in a.iter().enumerate() {
        c[i] = grid_coord(x, &format!("{path}[{i}]"))?;
    }
    GridBox::new(c[0], c[1], c[2], c[3]).map_err(|m| OracleError::schema(path, m))
}

fn part(v: &Value, path: &str) -> Res<PartProposal> {
    let m = object(v, path, &["name", "material", "description", "bbox"])?;
    let name = string(&m["name"], &format!("{path}.name"))?;
    if name.trim().is_empty() {
        return Err(OracleError::schema(format!("{path}.name"), "empty part name"));
    }
    let bbox_path = format!("{path}.bbox");
    let boxes = array(&m["bbox"], &bbox_path)?;
    if boxes.is_empty() {
        return Err(OracleError::schema(bbox_path, "bbox list must be non-empty"));
    }
    let bbox = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| grid_box(b, &format!("{bbox_path}[{i}]")))
        .collect::<Res<Vec<_>>>()?;
    Ok(PartProposal {
        name,
        material: string(&m["material"], &format!("{path}.material"))?,
        description: string(&m["description"], &format!("{path}.description"))?,
        bbox,
    })
}

/// Parses a segmentation response and returns the views in the order of
/// `stems`. Every announced stem must appear exactly once.
pub fn parse_view_parts(text: &str, stems: &[String]) -> Res<Vec<ViewParts>> {
    let root = parse_root(text)?;
    let m = object(&root, "$", &["views"])?;
    let views = array(&m["views"], "$.views")?;
    let announced: BTreeSet<&str> = stems.iter().map(String::as_str).collect();
    let mut by_stem: BTreeMap<String, ViewParts> = BTreeMap::new();
    for (vi, v) in views.iter().enumerate() {
        let vpath = format!("$.views[{vi}]");
        let vm = object(v, &vpath, &["image_stem", "parts"])?;
        let stem_path = format!("{vpath}.image_stem");
        let image_stem = string(&vm["image_stem"], &stem_path)?;
        if !announced.contains(image_stem.as_str()) {
            return Err(OracleError::schema(stem_path, format!("unknown image stem {image_stem:?}")));
        }
        let parts_path = format!("{vpath}.parts");
        let parts = array(&vm["parts"], &parts_path)?
            .iter()
            .enumerate()
            .map(|(pi, p)| part(p, &format!("{parts_path}[{pi}]")))
            .collect::<Res<Vec<_>>>()?;
        let mut names = BTreeSet::new();
        for (pi, p) in parts.iter().enumerate() {
            if !names.insert(p.name.as_str()) {
                return Err(OracleError::schema(
                    format!("{parts_path}[{pi}].name"),
                    format!("duplicate part name {:?} in view", p.name),
                ));
            }
        }
        if by_stem.insert(image_stem.clone(), ViewParts { image_stem: image_stem.clone(), parts }).is_some() {
            return Err(OracleError::schema(stem_path, format!("duplicate image stem {image_stem:?}")));
        }
    }
    stems
        .iter()
        .map(|s| {
            by_stem
                .remove(s)
                .ok_or_else(|| OracleError::schema("$.views", format!("missing view for stem {s:?}")))
        })
        .collect()
}

pub fn parse_material_choice(text: &str, candidate_ids: &[&str]) -> Res<MaterialChoice> {
    let root = parse_root(text)?;
    let m = object(&root, "$", &["chosen_material_id"])?;
    let id = string(&m["chosen_material_id"], "$.chosen_material_id")?;
    if !candidate_ids.contains(&id.as_str()) {
        return Err(OracleError::schema(
            "$.chosen_material_id",
            format!("id {id:?} is not one of the offered candidates"),
        ));
    }
    Ok(MaterialChoice { chosen_material_id: id })
}

pub fn parse_density(text: &str) -> Res<DensityEstimate> {
    let root = parse_root(text)?;
    let m = object(&root, "$", &["density", "notes"])?;
    let density = finite_number(&m["density"], "$.density")?;
    if density <= 0.0 {
        return Err(OracleError::schema("$.density", "density must be > 0"));
    }
    Ok(DensityEstimate { density, notes: string(&m["notes"], "$.notes")? })
}

pub fn parse_mask_verdict(text: &str, resolution: (usize, usize)) -> Res<MaskVerdict> {
    let root = parse_root(text)?;
    let m = object(&root, "$", &["approved", "extra_positive_points"])?;
    let approved = m["approved"]
        .as_bool()
        .ok_or_else(|| OracleError::schema("$.approved", "expected boolean"))?;
    let pts_path = "$.extra_positive_points";
    let mut points = Vec::new();
    for (i, p) in array(&m["extra_positive_points"], pts_path)?.iter().enumerate() {
        let path = format!("{pts_path}[{i}]");
        let a = array(p, &path)?;
        let coords: Vec<u64> = a.iter().filter_map(Value::as_u64).collect();
        if a.len() != 2 || coords.len() != 2 {
            return Err(OracleError::schema(path, "expected [x, y] integer pixel coordinates"));
        }
        if coords[0] >= resolution.0 as u64 || coords[1] >= resolution.1 as u64 {
            return Err(OracleError::schema(path, "point outside the frame"));
        }
        points.push(Pixel { x: coords[0] as u32, y: coords[1] as u32 });
    }
    if approved && !points.is_empty() {
        return Err(OracleError::schema(pts_path, "approved verdict must not carry extra points"));
    }
    Ok(MaskVerdict { approved, extra_positive_points: points, coverage: None })
}

pub fn parse_judge_score(text: &str) -> Res<JudgeScore> {
    let root = parse_root(text)?;
    let m = object(&root, "$", &["score", "rationale"])?;
    Ok(JudgeScore {
        score: finite_number(&m["score"], "$.score")?,
        rationale: string(&m["rationale"], "$.rationale")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stems(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn out_of_range_bbox_reports_field_path() {
        let text = r#"{"views":[{"image_stem":"a","parts":[{"name":"body","material":"Metal","description":"d","bbox":[[1200,0,900,500]]}]}]}"#;
        let err = parse_view_parts(text, &stems(&["a"])).unwrap_err();
        assert_eq!(
            err,
            OracleError::Schema {
                path: "$.views[0].parts[0].bbox[0][0]".into(),
                message: "coordinate out of 0..1000".into()
            }
        );
    }

    #[test]
    fn negative_and_fractional_coordinates_are_rejected() {
        for bad in ["-1", "12.5"] {
            let text = format!(
                r#"{{"views":[{{"image_stem":"a","parts":[{{"name":"b","material":"M","description":"d","bbox":[[0,{bad},5,5]]}}]}}]}}"#
            );
            let err = parse_view_parts(&text, &stems(&["a"])).unwrap_err();
            assert!(matches!(err, OracleError::Schema { ref path, .. } if path == "$.views[0].parts[0].bbox[0][1]"), "{err}");
        }
    }

    #[test]
    fn inverted_box_and_empty_bbox_list() {
        let inverted = r#"{"views":[{"image_stem":"a","parts":[{"name":"b","material":"M","description":"d","bbox":[[10,0,5,5]]}]}]}"#;
        assert!(parse_view_parts(inverted, &stems(&["a"])).is_err());
        let empty = r#"{"views":[{"image_stem":"a","parts":[{"name":"b","material":"M","description":"d","bbox":[]}]}]}"#;
        let err = parse_view_parts(empty, &stems(&["a"])).unwrap_err();
        assert!(err.to_string().contains("$.views[0].parts[0].bbox"));
    }

    #[test]
    fn unknown_stem_missing_view_and_extra_field() {
        let one = r#"{"views":[{"image_stem":"a","parts":[]}]}"#;
        assert!(parse_view_parts(one, &stems(&["a", "b"])).unwrap_err().to_string().contains("missing view"));
        assert!(parse_view_parts(one, &stems(&["z"])).unwrap_err().to_string().contains("unknown image stem"));
        let extra = r#"{"views":[{"image_stem":"a","parts":[],"note":1}]}"#;
        let err = parse_view_parts(extra, &stems(&["a"])).unwrap_err();
        assert_eq!(err, OracleError::schema("$.views[0].note", "unexpected field"));
    }

    #[test]
    fn views_are_returned_in_announced_order() {
        let text = r#"{"views":[{"image_stem":"b","parts":[]},{"image_stem":"a","parts":[]}]}"#;
        let v = parse_view_parts(text, &stems(&["a", "b"])).unwrap();
        assert_eq!(v[0].image_stem, "a");
        assert_eq!(v[1].image_stem, "b");
    }

    #[test]
    fn duplicate_part_names_in_one_view() {
        let p = r#"{"name":"body","material":"M","description":"d","bbox":[[0,0,1,1]]}"#;
        let text = format!(r#"{{"views":[{{"image_stem":"a","parts":[{p},{p}]}}]}}"#);
        let err = parse_view_parts(&text, &stems(&["a"])).unwrap_err();
        assert!(err.to_string().contains("$.views[0].parts[1].name"));
    }

    #[test]
    fn markdown_fenced_output_is_malformed() {
        let err = parse_density("```json\n{\"density\": 1, \"notes\": \"x\"}\n```").unwrap_err();
        assert!(matches!(err, OracleError::MalformedJson(_)));
    }

    #[test]
    fn density_must_be_positive() {
        let d = parse_density(r#"{"density": 7800, "notes": "solid steel"}"#).unwrap();
        assert_eq!(d, DensityEstimate { density: 7800.0, notes: "solid steel".into() });
        let err = parse_density(r#"{"density": -5, "notes": "x"}"#).unwrap_err();
        assert_eq!(err, OracleError::schema("$.density", "density must be > 0"));
        assert!(parse_density(r#"{"density": "heavy", "notes": "x"}"#).is_err());
    }

    #[test]
    fn material_choice_must_be_a_candidate() {
        let ids = ["brushed_steel_01", "oak_03"];
        let ok = parse_material_choice(r#"{"chosen_material_id": "brushed_steel_01"}"#, &ids).unwrap();
        assert_eq!(ok.chosen_material_id, "brushed_steel_01");
        let err = parse_material_choice(r#"{"chosen_material_id": "granite_9"}"#, &ids).unwrap_err();
        assert!(matches!(err, OracleError::Schema { ref path, .. } if path == "$.chosen_material_id"));
    }

    #[test]
    fn mask_verdict_rules() {
        let v = parse_mask_verdict(r#"{"approved": false, "extra_positive_points": [[3, 4]]}"#, (10, 10)).unwrap();
        assert_eq!(v.extra_positive_points, vec![Pixel { x: 3, y: 4 }]);
        assert!(parse_mask_verdict(r#"{"approved": true, "extra_positive_points": [[3, 4]]}"#, (10, 10)).is_err());
        assert!(parse_mask_verdict(r#"{"approved": false, "extra_positive_points": [[30, 4]]}"#, (10, 10)).is_err());
    }

    #[test]
    fn judge_score_must_be_numeric() {
        assert_eq!(parse_judge_score(r#"{"score": 5.5, "rationale": "ok"}"#).unwrap().score, 5.5);
        assert!(matches!(parse_judge_score("not json"), Err(OracleError::MalformedJson(_))));
        assert!(parse_judge_score(r#"{"score": "high", "rationale": "ok"}"#).is_err());
    }
}
