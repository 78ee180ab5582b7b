use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::finding::Finding;
use crate::ir::{AppProgram, Instruction};
use crate::manifest::{AppManifest, Category, Direction, ResourceId};
use crate::sim::bus::{Field, MessageKind};

/// What a program touches, collected syntactically over every instruction,
/// reachable or not.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceUsage {
    pub subscribed: BTreeSet<MessageKind>,
    pub published: BTreeSet<MessageKind>,
    pub net_hosts: BTreeSet<String>,
    pub store_keys: BTreeSet<String>,
    pub reads_location: bool,
}

pub fn is_location_field(f: Field) -> bool {
    matches!(f, Field::PositionX | Field::PositionY | Field::PositionHeading)
}

pub fn collect_resource_usage(p: &AppProgram) -> ResourceUsage {
    let mut u = ResourceUsage::default();
    for h in &p.handlers {
        u.subscribed.insert(h.trigger);
        for ins in h.blocks.iter().flat_map(|b| &b.body) {
            match ins {
                Instruction::Publish { kind, .. } => {
                    u.published.insert(*kind);
                }
                Instruction::NetSend { host, .. } => {
                    u.net_hosts.insert(host.clone());
                }
                Instruction::Store { key, .. } => {
                    u.store_keys.insert(key.clone());
                }
                Instruction::ReadField { field, .. } if is_location_field(*field) => {
                    u.reads_location = true;
                }
                _ => {}
            }
        }
    }
    u
}

/// Manifest resource that governs a message kind.
pub fn resource_for(kind: MessageKind) -> ResourceId {
    match kind {
        MessageKind::VehicleReport => ResourceId::VehicleReport,
        MessageKind::LeadVehicleReport => ResourceId::LeadVehicleReport,
        MessageKind::TrafficSignal => ResourceId::TrafficSignal,
        MessageKind::SteeringCmd => ResourceId::Steering,
        MessageKind::ThrottleCmd => ResourceId::Throttle,
        MessageKind::BrakeCmd => ResourceId::Brake,
        MessageKind::GearCmd => ResourceId::Gear,
        MessageKind::EngineCmd => ResourceId::Engine,
    }
}

fn declared_any(m: &AppManifest, r: ResourceId) -> bool {
    m.resources.iter().any(|req| req.resource == r)
}

/// Compares what the program does with what the manifest declares.
pub fn check_manifest_consistency(p: &AppProgram, m: &AppManifest) -> Vec<Finding> {
    let u = collect_resource_usage(p);
    let mut out = Vec::new();
    let at = |r: ResourceId| format!("resource:{r}");

    for kind in &u.published {
        let r = resource_for(*kind);
        if !m.declares(r, Direction::Control) {
            out.push(Finding::reject(
                "undeclared_control",
                at(r),
                format!("program publishes {kind} but the manifest does not declare control of {r}"),
            ));
        }
    }
    for kind in &u.subscribed {
        let r = resource_for(*kind);
        if !m.declares(r, Direction::Subscribe) {
            out.push(Finding::reject(
                "undeclared_subscribe",
                at(r),
                format!("program handles {kind} but the manifest does not subscribe to {r}"),
            ));
        }
    }
    if !u.net_hosts.is_empty() && !declared_any(m, ResourceId::Network) {
        let hosts: Vec<_> = u.net_hosts.iter().cloned().collect();
        out.push(Finding::reject(
            "undeclared_network",
            at(ResourceId::Network),
            format!("program sends to {} without declaring network access", hosts.join(", ")),
        ));
    }
    if !u.store_keys.is_empty() && !declared_any(m, ResourceId::Storage) {
        out.push(Finding::reject(
            "undeclared_storage",
            at(ResourceId::Storage),
            "program writes storage without declaring it",
        ));
    }
    if m.category != Category::Driving {
        for req in &m.resources {
            if req.direction == Direction::Control && req.resource.is_actuator() {
                out.push(Finding::reject(
                    "category_actuator_restriction",
                    at(req.resource),
                    format!("{} apps may not control {}", m.category, req.resource),
                ));
            }
        }
    }

    for req in &m.resources {
        let used = match (req.resource, req.direction) {
            (ResourceId::Network, _) => !u.net_hosts.is_empty(),
            (ResourceId::Storage, _) => !u.store_keys.is_empty(),
            (ResourceId::Location, _) => u.reads_location,
            (r, Direction::Control) => u.published.iter().any(|k| resource_for(*k) == r),
            (r, Direction::Subscribe) => u.subscribed.iter().any(|k| resource_for(*k) == r),
        };
        if !used {
            out.push(Finding::warn(
                "unused_resource",
                at(req.resource),
                format!("{} declared for {} but never used", req.resource, req.direction),
            ));
        }
    }
    out.sort();
    out
}
