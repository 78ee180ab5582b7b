//! Standardized app specification: required resources, purpose statements,
//! usage constraints and allowable circumstances, stored as XML.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finding::Finding;

macro_rules! string_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ();

            fn from_str(s: &str) -> Result<Self, ()> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(()),
                }
            }
        }
    };
}

string_enum!(
    /// Closed vocabulary of in-vehicle resources an app may request.
    ResourceId {
        VehicleReport => "vehicle_report",
        Steering => "steering",
        Throttle => "throttle",
        Brake => "brake",
        Gear => "gear",
        Engine => "engine",
        TrafficSignal => "traffic_signal",
        LeadVehicleReport => "lead_vehicle_report",
        Location => "location",
        Network => "network",
        Storage => "storage",
    }
);

impl ResourceId {
    pub fn is_actuator(self) -> bool {
        matches!(
            self,
            ResourceId::Steering
                | ResourceId::Throttle
                | ResourceId::Brake
                | ResourceId::Gear
                | ResourceId::Engine
        )
    }

    /// Platform resources that are only ever "used", never subscribed to.
    pub fn is_platform(self) -> bool {
        matches!(self, ResourceId::Network | ResourceId::Storage)
    }
}

string_enum!(Direction {
    Subscribe => "subscribe",
    Control => "control",
});

string_enum!(CircumstanceTag {
    Highway => "highway",
    Urban => "urban",
    TestFacility => "test_facility",
    ClearWeather => "clear_weather",
    Any => "any",
});

string_enum!(Category {
    Driving => "driving",
    Infotainment => "infotainment",
    Diagnostics => "diagnostics",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRequest {
    pub resource: ResourceId,
    pub direction: Direction,
    pub purpose: String,
    pub exclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppManifest {
    pub app_id: String,
    pub category: Category,
    pub app_purpose: String,
    pub allowable_circumstances: Vec<CircumstanceTag>,
    pub resources: Vec<ResourceRequest>,
}

impl AppManifest {
    pub fn declares(&self, resource: ResourceId, direction: Direction) -> bool {
        self.resources
            .iter()
            .any(|r| r.resource == resource && r.direction == direction)
    }

    fn exclusive_control(&self, resource: ResourceId) -> Option<bool> {
        self.resources
            .iter()
            .filter(|r| r.resource == resource && r.direction == Direction::Control)
            .map(|r| r.exclusive)
            .reduce(|a, b| a || b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("malformed XML at {line}:{col}: {message}")]
    MalformedXml { line: u32, col: u32, message: String },
    #[error("unknown resource {name:?} at line {line}")]
    UnknownResource { name: String, line: u32 },
    #[error("<{element}> is missing {field} at line {line}")]
    MissingField {
        element: String,
        field: String,
        line: u32,
    },
    #[error("unknown element or attribute {name:?} at line {line}")]
    UnknownElement { name: String, line: u32 },
    #[error("invalid value {value:?} for {field} at line {line}")]
    InvalidValue {
        field: String,
        value: String,
        line: u32,
    },
}

pub fn parse_manifest(xml_text: &str) -> Result<AppManifest, ManifestError> {
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| {
        let pos = e.pos();
        ManifestError::MalformedXml {
            line: pos.row,
            col: pos.col,
            message: e.to_string(),
        }
    })?;
    let line_of = |node: roxmltree::Node| doc.text_pos_at(node.range().start).row;

    let root = doc.root_element();
    if root.tag_name().name() != "avapp" {
        return Err(ManifestError::UnknownElement {
            name: root.tag_name().name().to_string(),
            line: line_of(root),
        });
    }
    check_attributes(root, &["id", "category"], line_of(root))?;
    let app_id = required_attr(root, "id", line_of(root))?.to_string();
    let category = parse_attr::<Category>(root, "category", line_of(root))?;

    let mut app_purpose = None;
    let mut circumstances = Vec::new();
    let mut resources = Vec::new();

    for child in element_children(root, line_of)? {
        let line = line_of(child);
        match child.tag_name().name() {
            "purpose" => {
                check_attributes(child, &[], line)?;
                app_purpose = Some(leaf_text(child, line_of)?);
            }
            "circumstances" => {
                check_attributes(child, &[], line)?;
                for tag in element_children(child, line_of)? {
                    let tline = line_of(tag);
                    if tag.tag_name().name() != "tag" {
                        return Err(ManifestError::UnknownElement {
                            name: tag.tag_name().name().to_string(),
                            line: tline,
                        });
                    }
                    check_attributes(tag, &[], tline)?;
                    let text = leaf_text(tag, line_of)?;
                    let parsed = text.parse().map_err(|_| ManifestError::InvalidValue {
                        field: "tag".into(),
                        value: text.clone(),
                        line: tline,
                    })?;
                    circumstances.push(parsed);
                }
            }
            "resource" => resources.push(parse_resource(child, line_of)?),
            other => {
                return Err(ManifestError::UnknownElement {
                    name: other.to_string(),
                    line,
                })
            }
        }
    }

    Ok(AppManifest {
        app_id,
        category,
        app_purpose: app_purpose.ok_or_else(|| ManifestError::MissingField {
            element: "avapp".into(),
            field: "purpose".into(),
            line: line_of(root),
        })?,
        allowable_circumstances: circumstances,
        resources,
    })
}

fn parse_resource<'a>(
    node: roxmltree::Node<'a, 'a>,
    line_of: impl Fn(roxmltree::Node) -> u32 + Copy,
) -> Result<ResourceRequest, ManifestError> {
    let line = line_of(node);
    check_attributes(node, &["name", "direction", "exclusive"], line)?;
    let name = required_attr(node, "name", line)?;
    let resource = name.parse().map_err(|_| ManifestError::UnknownResource {
        name: name.to_string(),
        line,
    })?;
    let direction = parse_attr::<Direction>(node, "direction", line)?;
    let exclusive = match node.attribute("exclusive") {
        None | Some("false") => false,
        Some("true") => true,
        Some(other) => {
            return Err(ManifestError::InvalidValue {
                field: "exclusive".into(),
                value: other.into(),
                line,
            })
        }
    };
    let mut purpose = None;
    for child in element_children(node, line_of)? {
        if child.tag_name().name() != "purpose" {
            return Err(ManifestError::UnknownElement {
                name: child.tag_name().name().to_string(),
                line: line_of(child),
            });
        }
        check_attributes(child, &[], line_of(child))?;
        purpose = Some(leaf_text(child, line_of)?);
    }
    Ok(ResourceRequest {
        resource,
        direction,
        exclusive,
        purpose: purpose.ok_or_else(|| ManifestError::MissingField {
            element: "resource".into(),
            field: "purpose".into(),
            line,
        })?,
    })
}

fn element_children<'a>(
    node: roxmltree::Node<'a, 'a>,
    line_of: impl Fn(roxmltree::Node) -> u32,
) -> Result<Vec<roxmltree::Node<'a, 'a>>, ManifestError> {
    let mut out = Vec::new();
    for child in node.children() {
        if child.is_element() {
            out.push(child);
        } else if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
            return Err(ManifestError::UnknownElement {
                name: format!("text in <{}>", node.tag_name().name()),
                line: line_of(child),
            });
        }
    }
    Ok(out)
}

fn leaf_text(
    node: roxmltree::Node,
    line_of: impl Fn(roxmltree::Node) -> u32,
) -> Result<String, ManifestError> {
    if let Some(child) = node.children().find(|c| c.is_element()) {
        return Err(ManifestError::UnknownElement {
            name: child.tag_name().name().to_string(),
            line: line_of(child),
        });
    }
    let text: String = node.children().filter_map(|c| c.text()).collect();
    Ok(text.trim().to_string())
}

fn check_attributes(node: roxmltree::Node, allowed: &[&str], line: u32) -> Result<(), ManifestError> {
    for attr in node.attributes() {
        if !allowed.contains(&attr.name()) {
            return Err(ManifestError::UnknownElement {
                name: format!("@{}", attr.name()),
                line,
            });
        }
    }
    Ok(())
}

fn required_attr<'a>(
    node: roxmltree::Node<'a, 'a>,
    name: &str,
    line: u32,
) -> Result<&'a str, ManifestError> {
    node.attribute(name).ok_or_else(|| ManifestError::MissingField {
        element: node.tag_name().name().to_string(),
        field: name.to_string(),
        line,
    })
}

fn parse_attr<T: FromStr>(node: roxmltree::Node, name: &str, line: u32) -> Result<T, ManifestError> {
    let raw = required_attr(node, name, line)?;
    raw.parse().map_err(|_| ManifestError::InvalidValue {
        field: name.to_string(),
        value: raw.to_string(),
        line,
    })
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Writes the manifest in canonical form: fixed attribute order, two-space
/// indentation, `\n` line endings.
pub fn serialize_manifest(m: &AppManifest) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<avapp id=\"{}\" category=\"{}\">\n",
        escape(&m.app_id),
        m.category
    ));
    out.push_str(&format!("  <purpose>{}</purpose>\n", escape(&m.app_purpose)));
    out.push_str("  <circumstances>\n");
    for tag in &m.allowable_circumstances {
        out.push_str(&format!("    <tag>{tag}</tag>\n"));
    }
    out.push_str("  </circumstances>\n");
    for r in &m.resources {
        out.push_str(&format!(
            "  <resource name=\"{}\" direction=\"{}\" exclusive=\"{}\">\n    <purpose>{}</purpose>\n  </resource>\n",
            r.resource,
            r.direction,
            r.exclusive,
            escape(&r.purpose)
        ));
    }
    out.push_str("</avapp>\n");
    out
}

/// Checks every manifest invariant and reports all violations, sorted by
/// field path.
pub fn validate_manifest(m: &AppManifest) -> Vec<Finding> {
    let mut findings = Vec::new();
    if m.app_id.trim().is_empty() {
        findings.push(Finding::reject("empty_app_id", "app_id", "app id is empty"));
    }

    let mut seen = BTreeSet::new();
    for (i, r) in m.resources.iter().enumerate() {
        let base = format!("resources[{i}]");
        if !seen.insert((r.resource, r.direction)) {
            findings.push(Finding::reject(
                "duplicate_resource",
                base.clone(),
                format!("({}, {}) requested more than once", r.resource, r.direction),
            ));
        }
        if r.purpose.trim().is_empty() {
            findings.push(Finding::reject(
                "empty_purpose",
                format!("{base}.purpose"),
                format!("no purpose given for {}", r.resource),
            ));
        }
        let bad_direction = match r.direction {
            Direction::Control => !r.resource.is_actuator() && !r.resource.is_platform(),
            Direction::Subscribe => r.resource.is_platform(),
        };
        if bad_direction {
            findings.push(Finding::reject(
                "invalid_direction",
                format!("{base}.direction"),
                format!("{} cannot be requested with direction {}", r.resource, r.direction),
            ));
        }
    }

    let tags = &m.allowable_circumstances;
    if m.category == Category::Driving && tags.is_empty() {
        findings.push(Finding::reject(
            "circumstances_required",
            "circumstances",
            "driving apps must declare allowable circumstances",
        ));
    }
    if tags.contains(&CircumstanceTag::Any) && tags.len() > 1 {
        findings.push(Finding::reject(
            "any_not_alone",
            "circumstances",
            "`any` may not be combined with other tags",
        ));
    }
    let unique: BTreeSet<_> = tags.iter().collect();
    if unique.len() != tags.len() {
        findings.push(Finding::reject(
            "duplicate_circumstance",
            "circumstances",
            "a circumstance tag is listed twice",
        ));
    }

    findings.sort();
    findings
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    ExclusiveVsAny,
    ExclusiveVsExclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictFinding {
    pub resource: ResourceId,
    /// (installed app, candidate app)
    pub apps: (String, String),
    pub kind: ConflictKind,
}

impl fmt::Display for ConflictFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ConflictKind::ExclusiveVsAny => "exclusive_vs_any",
            ConflictKind::ExclusiveVsExclusive => "exclusive_vs_exclusive",
        };
        write!(f, "{kind} on {} between {} and {}", self.resource, self.apps.0, self.apps.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConflictError {
    #[error("app {0:?} is already installed")]
    DuplicateAppId(String),
}

/// Reports every resource that the candidate and an installed app both
/// control where at least one side demands exclusivity. Subscriptions never
/// conflict.
pub fn detect_conflicts(
    installed: &[AppManifest],
    candidate: &AppManifest,
) -> Result<Vec<ConflictFinding>, ConflictError> {
    if installed.iter().any(|m| m.app_id == candidate.app_id) {
        return Err(ConflictError::DuplicateAppId(candidate.app_id.clone()));
    }
    let mut out = Vec::new();
    for other in installed {
        for &resource in ResourceId::ALL {
            let (Some(a), Some(b)) = (
                other.exclusive_control(resource),
                candidate.exclusive_control(resource),
            ) else {
                continue;
            };
            let kind = match (a, b) {
                (true, true) => ConflictKind::ExclusiveVsExclusive,
                (true, false) | (false, true) => ConflictKind::ExclusiveVsAny,
                (false, false) => continue,
            };
            out.push(ConflictFinding {
                resource,
                apps: (other.app_id.clone(), candidate.app_id.clone()),
                kind,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"<avapp id="mon" category="diagnostics">
  <purpose>watch the car</purpose>
  <circumstances><tag>any</tag></circumstances>
  <resource name="vehicle_report" direction="subscribe"><purpose>monitor</purpose></resource>
</avapp>"#;

    pub(crate) const PATH_FOLLOWER: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<avapp id="path_follower" category="driving">
  <purpose>provide trajectory following along a given set of coordinates</purpose>
  <circumstances><tag>test_facility</tag></circumstances>
  <resource name="vehicle_report" direction="subscribe" exclusive="false">
    <purpose>monitor the vehicle state update</purpose>
  </resource>
  <resource name="steering" direction="control" exclusive="true">
    <purpose>perform the steering wheel angle adjustment</purpose>
  </resource>
  <resource name="throttle" direction="control" exclusive="true">
    <purpose>perform emergency stop</purpose>
  </resource>
</avapp>"#;

    fn request(resource: ResourceId, direction: Direction, exclusive: bool) -> ResourceRequest {
        ResourceRequest {
            resource,
            direction,
            purpose: "p".into(),
            exclusive,
        }
    }

    fn app(id: &str, resources: Vec<ResourceRequest>) -> AppManifest {
        AppManifest {
            app_id: id.into(),
            category: Category::Driving,
            app_purpose: "x".into(),
            allowable_circumstances: vec![CircumstanceTag::Highway],
            resources,
        }
    }

    #[test]
    fn minimal_manifest_parses() {
        let m = parse_manifest(MINIMAL).unwrap();
        assert_eq!(m.resources.len(), 1);
        assert_eq!(m.resources[0].purpose, "monitor");
        assert!(!m.resources[0].exclusive);
        assert_eq!(m.allowable_circumstances, vec![CircumstanceTag::Any]);
        assert!(validate_manifest(&m).is_empty());
    }

    #[test]
    fn path_follower_manifest_parses_and_validates() {
        let m = parse_manifest(PATH_FOLLOWER).unwrap();
        assert_eq!(m.category, Category::Driving);
        assert_eq!(m.allowable_circumstances, vec![CircumstanceTag::TestFacility]);
        let exclusive: Vec<_> = m
            .resources
            .iter()
            .filter(|r| r.exclusive)
            .map(|r| r.resource)
            .collect();
        assert_eq!(exclusive, vec![ResourceId::Steering, ResourceId::Throttle]);
        assert!(m.declares(ResourceId::VehicleReport, Direction::Subscribe));
        assert_eq!(validate_manifest(&m), vec![]);
    }

    #[test]
    fn unknown_resource_is_rejected() {
        let xml = MINIMAL.replace("vehicle_report", "lidarX");
        match parse_manifest(&xml) {
            Err(ManifestError::UnknownResource { name, line }) => {
                assert_eq!(name, "lidarX");
                assert_eq!(line, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn closed_schema_rejects_unknown_elements() {
        let xml = MINIMAL.replace("<purpose>watch", "<icon/><purpose>watch");
        assert!(matches!(
            parse_manifest(&xml),
            Err(ManifestError::UnknownElement { ref name, .. }) if name == "icon"
        ));
        let xml = MINIMAL.replace("direction=\"subscribe\"", "direction=\"subscribe\" rate=\"5\"");
        assert!(matches!(parse_manifest(&xml), Err(ManifestError::UnknownElement { .. })));
    }

    #[test]
    fn missing_fields_and_malformed_documents() {
        let xml = MINIMAL.replace("<purpose>monitor</purpose>", "");
        assert!(matches!(
            parse_manifest(&xml),
            Err(ManifestError::MissingField { ref field, line: 4, .. }) if field == "purpose"
        ));
        let xml = MINIMAL.replace(" id=\"mon\"", "");
        assert!(matches!(parse_manifest(&xml), Err(ManifestError::MissingField { .. })));
        assert!(matches!(
            parse_manifest("<avapp id=\"a\""),
            Err(ManifestError::MalformedXml { .. })
        ));
    }

    #[test]
    fn driving_app_without_circumstances() {
        let mut m = parse_manifest(PATH_FOLLOWER).unwrap();
        m.allowable_circumstances.clear();
        let f = validate_manifest(&m);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].rule, "circumstances_required");
    }

    #[test]
    fn duplicate_resource_entries() {
        let mut m = parse_manifest(PATH_FOLLOWER).unwrap();
        m.resources.push(request(ResourceId::Steering, Direction::Control, false));
        let f = validate_manifest(&m);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].rule, "duplicate_resource");
        assert_eq!(f[0].path, "resources[3]");
    }

    #[test]
    fn direction_and_tag_invariants() {
        let mut m = app(
            "x",
            vec![
                request(ResourceId::VehicleReport, Direction::Control, false),
                request(ResourceId::Network, Direction::Subscribe, false),
            ],
        );
        m.allowable_circumstances = vec![CircumstanceTag::Any, CircumstanceTag::Urban];
        m.resources[0].purpose = "  ".into();
        let rules: Vec<_> = validate_manifest(&m).into_iter().map(|f| f.rule).collect();
        assert_eq!(
            rules,
            vec!["any_not_alone", "invalid_direction", "empty_purpose", "invalid_direction"]
        );
    }

    #[test]
    fn steering_conflict_between_exclusive_apps() {
        let pf = parse_manifest(PATH_FOLLOWER).unwrap();
        let cruise = app("cruise", vec![request(ResourceId::Steering, Direction::Control, true)]);
        let found = detect_conflicts(&[pf.clone()], &cruise).unwrap();
        assert_eq!(
            found,
            vec![ConflictFinding {
                resource: ResourceId::Steering,
                apps: ("path_follower".into(), "cruise".into()),
                kind: ConflictKind::ExclusiveVsExclusive,
            }]
        );
        assert_eq!(detect_conflicts(&[], &cruise).unwrap(), vec![]);
        assert_eq!(
            detect_conflicts(&[pf.clone()], &pf),
            Err(ConflictError::DuplicateAppId("path_follower".into()))
        );
    }

    #[test]
    fn subscribers_never_conflict() {
        let a = app("a", vec![request(ResourceId::VehicleReport, Direction::Subscribe, true)]);
        let b = app("b", vec![request(ResourceId::VehicleReport, Direction::Subscribe, true)]);
        assert!(detect_conflicts(&[a], &b).unwrap().is_empty());
    }

    fn arb_request() -> impl Strategy<Value = ResourceRequest> {
        (
            proptest::sample::select(ResourceId::ALL.to_vec()),
            proptest::sample::select(Direction::ALL.to_vec()),
            "[a-zA-Z &<>\"']{0,12}",
            any::<bool>(),
        )
            .prop_map(|(resource, direction, purpose, exclusive)| ResourceRequest {
                resource,
                direction,
                purpose: purpose.trim().to_string(),
                exclusive,
            })
    }

    fn arb_manifest() -> impl Strategy<Value = AppManifest> {
        (
            "[a-z_]{1,10}",
            proptest::sample::select(Category::ALL.to_vec()),
            "[a-z <&]{0,20}",
            proptest::collection::vec(proptest::sample::select(CircumstanceTag::ALL.to_vec()), 0..4),
            proptest::collection::vec(arb_request(), 0..6),
        )
            .prop_map(|(app_id, category, purpose, tags, resources)| AppManifest {
                app_id,
                category,
                app_purpose: purpose.trim().to_string(),
                allowable_circumstances: tags,
                resources,
            })
    }

    /// Brute-force oracle: pairwise scan of every request pair.
    fn conflict_oracle(a: &AppManifest, b: &AppManifest) -> BTreeSet<ResourceId> {
        let mut out = BTreeSet::new();
        for ra in &a.resources {
            for rb in &b.resources {
                if ra.resource == rb.resource
                    && ra.direction == Direction::Control
                    && rb.direction == Direction::Control
                    && (ra.exclusive || rb.exclusive)
                {
                    out.insert(ra.resource);
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(m in arb_manifest()) {
            let text = serialize_manifest(&m);
            let back = parse_manifest(&text).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(serialize_manifest(&back), text);
        }

        #[test]
        fn validation_is_pure_and_sorted(m in arb_manifest()) {
            let a = validate_manifest(&m);
            prop_assert_eq!(&a, &validate_manifest(&m));
            prop_assert!(a.windows(2).all(|w| w[0].path <= w[1].path));
        }

        #[test]
        fn conflicts_are_symmetric_and_match_pairwise_oracle(
            mut a in arb_manifest(),
            mut b in arb_manifest(),
        ) {
            a.app_id = "a".into();
            b.app_id = "b".into();
            let ab = detect_conflicts(std::slice::from_ref(&a), &b).unwrap();
            let ba = detect_conflicts(std::slice::from_ref(&b), &a).unwrap();
            let ab_res: BTreeSet<_> = ab.iter().map(|c| c.resource).collect();
            let ba_res: BTreeSet<_> = ba.iter().map(|c| c.resource).collect();
            prop_assert_eq!(&ab_res, &ba_res);
            prop_assert_eq!(&ab_res, &conflict_oracle(&a, &b));
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert_eq!(&x.apps.0, &y.apps.1);
                prop_assert_eq!(x.kind, y.kind);
            }
        }
    }
}
