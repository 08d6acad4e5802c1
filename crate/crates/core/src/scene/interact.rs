use super::sim::ActionRequest;
use super::{ActionEvent, Entity, EntityKind, FluentValue, Outcome, SceneError, SceneGraph, Transition, Verb};

/// Apply one interaction request, returning the successor scene and the
/// resulting event. Out-of-reach requests leave the scene unchanged.
pub fn interact(scene: &SceneGraph, request: &ActionRequest) -> Result<(SceneGraph, ActionEvent), SceneError> {
    let mut next = scene.clone();
    let ev = interact_in_place(&mut next, request)?;
    Ok((next, ev))
}

/// Attach `object_id` rigidly to `agent_id`, freezing their relative pose.
pub fn grasp_attach(scene: &SceneGraph, agent_id: &str, object_id: &str) -> Result<SceneGraph, SceneError> {
    let mut next = scene.clone();
    check_reach(&next, agent_id, object_id)?;
    attach(&mut next, agent_id, object_id)?;
    Ok(next)
}

/// Drop whatever `agent_id` holds where it currently is.
pub fn release(scene: &SceneGraph, agent_id: &str) -> Result<SceneGraph, SceneError> {
    let mut next = scene.clone();
    detach(&mut next, agent_id)?;
    Ok(next)
}

/// Step-time wrapper: failures become `blocked` outcomes.
pub(crate) fn apply_request(scene: &mut SceneGraph, req: &ActionRequest) -> ActionEvent {
    let mut trial = scene.clone();
    match interact_in_place(&mut trial, req) {
        Ok(ev) => {
            *scene = trial;
            ev
        }
        Err(_) => event(scene, req, Outcome::Blocked),
    }
}

fn event(scene: &SceneGraph, req: &ActionRequest, outcome: Outcome) -> ActionEvent {
    ActionEvent {
        tick: scene.tick,
        agent_id: req.agent_id.clone(),
        verb: req.verb,
        target_id: req.target_id.clone(),
        outcome,
    }
}

fn check_reach(scene: &SceneGraph, agent_id: &str, target_id: &str) -> Result<(), SceneError> {
    let agent = scene.agent(agent_id)?;
    let target = scene.get(target_id).ok_or_else(|| SceneError::UnknownEntity(target_id.to_owned()))?;
    if target.aabb().distance_to_point([agent.pose.x, agent.pose.y]) > scene.config.reach {
        return Err(SceneError::OutOfReach { agent: agent_id.to_owned(), target: target_id.to_owned() });
    }
    Ok(())
}

fn attach(scene: &mut SceneGraph, agent_id: &str, object_id: &str) -> Result<(), SceneError> {
    let agent_pose = scene.agent(agent_id)?.pose;
    let object = scene.get(object_id).ok_or_else(|| SceneError::UnknownEntity(object_id.to_owned()))?;
    if object.kind != EntityKind::Object {
        return Err(SceneError::Inapplicable { verb: Verb::Grasp, kind: object.kind, target: object_id.to_owned() });
    }
    if let Some(holder) = &object.attached_to {
        return Err(SceneError::AlreadyAttached { object: object_id.to_owned(), holder: holder.clone() });
    }
    if scene.held_by(agent_id).is_some() {
        return Err(SceneError::HandsFull(agent_id.to_owned()));
    }
    let offset = agent_pose.relative(&object.pose);
    let object = scene.get_mut(object_id).expect("checked above");
    object.attached_to = Some(agent_id.to_owned());
    object.attach_offset = Some(offset);
    Ok(())
}

fn detach(scene: &mut SceneGraph, agent_id: &str) -> Result<String, SceneError> {
    scene.agent(agent_id)?;
    let held = scene.held_by(agent_id).map(|e| e.id.clone()).ok_or_else(|| SceneError::NotHolding(agent_id.to_owned()))?;
    let object = scene.get_mut(&held).expect("held object exists");
    object.attached_to = None;
    object.attach_offset = None;
    Ok(held)
}

fn interact_in_place(scene: &mut SceneGraph, req: &ActionRequest) -> Result<ActionEvent, SceneError> {
    scene.agent(&req.agent_id)?;
    if !req.verb.needs_target() {
        return Ok(event(scene, req, Outcome::Ok));
    }
    let target_id = req.target_id.as_deref().ok_or(SceneError::MissingTarget(req.verb))?;
    let target = scene.get(target_id).ok_or_else(|| SceneError::UnknownEntity(target_id.to_owned()))?;
    let kind = target.kind;

    if req.verb == Verb::Release {
        if scene.held_by(&req.agent_id).map(|e| e.id.as_str()) != Some(target_id) {
            return Err(SceneError::NotHolding(req.agent_id.clone()));
        }
        detach(scene, &req.agent_id)?;
        return Ok(event(scene, req, Outcome::Ok));
    }

    match check_reach(scene, &req.agent_id, target_id) {
        Err(SceneError::OutOfReach { .. }) => return Ok(event(scene, req, Outcome::OutOfRange)),
        other => other?,
    }

    let outcome = match req.verb {
        Verb::Grasp => {
            attach(scene, &req.agent_id, target_id)?;
            Outcome::Ok
        }
        Verb::Pour => pour(scene, &req.agent_id, target_id, kind)?,
        verb => apply_table(scene, verb, target_id)?,
    };
    Ok(event(scene, req, outcome))
}

/// Pouring is an instantaneous fluent flip: a held container labelled with
/// `contents` marks the target `filled_<contents>`.
fn pour(scene: &mut SceneGraph, agent_id: &str, target_id: &str, kind: EntityKind) -> Result<Outcome, SceneError> {
    if kind != EntityKind::Object {
        return Err(SceneError::Inapplicable { verb: Verb::Pour, kind, target: target_id.to_owned() });
    }
    let Some(container) = scene.held_by(agent_id) else {
        return Ok(Outcome::Blocked);
    };
    if container.id == target_id {
        return Ok(Outcome::Blocked);
    }
    let Some(contents) = container.fluent("contents").and_then(FluentValue::as_label).map(str::to_owned) else {
        return Ok(Outcome::Blocked);
    };
    if container.fluent("filled").and_then(FluentValue::as_bool) == Some(false) {
        return Ok(Outcome::Blocked);
    }
    let target = scene.get_mut(target_id).expect("target exists");
    target.fluents.insert(format!("filled_{contents}"), FluentValue::Bool(true));
    // data rows for `pour` may add further effects
    let _ = apply_table(scene, Verb::Pour, target_id);
    Ok(Outcome::Ok)
}

/// First matching row wins: entity-local rows, then scene-wide rows.
fn apply_table(scene: &mut SceneGraph, verb: Verb, target_id: &str) -> Result<Outcome, SceneError> {
    let target = scene.get(target_id).expect("target exists");
    let applies = |t: &&Transition| t.verb == verb && t.target_kind.is_none_or(|k| k == target.kind);
    let rows: Vec<&Transition> = target.transitions.iter().filter(applies).chain(scene.transitions.iter().filter(applies)).collect();
    if rows.is_empty() {
        return Err(SceneError::Inapplicable { verb, kind: target.kind, target: target_id.to_owned() });
    }
    let Some(row) = rows.into_iter().find(|t| pre_holds(target, t)) else {
        return Ok(Outcome::Blocked);
    };
    let post = row.post.clone();
    let target = scene.get_mut(target_id).expect("target exists");
    for (name, value) in post {
        write_fluent(target, name, value);
    }
    Ok(Outcome::Ok)
}

fn pre_holds(target: &Entity, t: &Transition) -> bool {
    t.pre.iter().all(|(name, want)| match target.fluent(name) {
        Some(have) => have.matches(want),
        // an absent boolean reads as false
        None => *want == FluentValue::Bool(false),
    })
}

fn write_fluent(target: &mut Entity, name: String, value: FluentValue) {
    let value = match (target.fluents.get(&name), value) {
        (Some(FluentValue::Scalar { lo, hi, .. }), FluentValue::Scalar { value, .. }) => FluentValue::scalar(value, *lo, *hi),
        (_, v) => v,
    };
    target.fluents.insert(name, value);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{load_scene, Pose, VelocityCommand};
    use std::f64::consts::FRAC_PI_2;

    fn kitchen() -> SceneGraph {
        let doc = r#"{"entities":[
          {"id":"agent1","kind":"agent","pose":{"x":0,"y":0,"yaw":0},"half_extents":[0.25,0.25]},
          {"id":"door1","kind":"door","pose":{"x":1.0,"y":0,"yaw":0},"half_extents":[0.1,0.5]},
          {"id":"milk","kind":"object","pose":{"x":0.5,"y":0.5,"yaw":0},"half_extents":[0.1,0.1],
           "fluents":{"contents":"milk","filled":true}},
          {"id":"mug","kind":"object","pose":{"x":0.5,"y":-0.5,"yaw":0},"half_extents":[0.1,0.1]},
          {"id":"coffee_maker","kind":"object","pose":{"x":-0.8,"y":0,"yaw":0},"half_extents":[0.2,0.2],
           "fluents":{"on":false}},
          {"id":"far_button","kind":"object","pose":{"x":-5.2,"y":0,"yaw":0},"half_extents":[0.2,0.2],
           "fluents":{"on":false}}
        ]}"#;
        load_scene(doc).unwrap()
    }

    #[test]
    fn twist_door_opens_it() {
        let s = kitchen();
        let (n, ev) = interact(&s, &ActionRequest::new("agent1", Verb::TwistDoor, Some("door1"))).unwrap();
        assert_eq!(ev.outcome, Outcome::Ok);
        let d = n.get("door1").unwrap();
        assert_eq!(d.fluent("open"), Some(&FluentValue::Bool(true)));
        assert_eq!(d.fluent("angle").and_then(FluentValue::as_f64), Some(FRAC_PI_2));
        // already open: precondition fails
        let (_, ev) = interact(&n, &ActionRequest::new("agent1", Verb::PushDoor, Some("door1"))).unwrap();
        assert_eq!(ev.outcome, Outcome::Blocked);
    }

    #[test]
    fn pour_milk_into_mug() {
        let s = grasp_attach(&kitchen(), "agent1", "milk").unwrap();
        let (n, ev) = interact(&s, &ActionRequest::new("agent1", Verb::Pour, Some("mug"))).unwrap();
        assert_eq!(ev.outcome, Outcome::Ok);
        assert_eq!(n.get("mug").unwrap().fluent("filled_milk"), Some(&FluentValue::Bool(true)));
        // without a container nothing happens
        let (n2, ev) = interact(&kitchen(), &ActionRequest::new("agent1", Verb::Pour, Some("mug"))).unwrap();
        assert_eq!(ev.outcome, Outcome::Blocked);
        assert_eq!(n2, kitchen());
    }

    #[test]
    fn press_button_toggles_and_respects_reach() {
        let s = kitchen();
        let req = ActionRequest::new("agent1", Verb::PressButton, Some("coffee_maker"));
        let (n, _) = interact(&s, &req).unwrap();
        assert_eq!(n.get("coffee_maker").unwrap().fluent("on"), Some(&FluentValue::Bool(true)));
        let (n, _) = interact(&n, &req).unwrap();
        assert_eq!(n.get("coffee_maker").unwrap().fluent("on"), Some(&FluentValue::Bool(false)));

        let far = ActionRequest::new("agent1", Verb::PressButton, Some("far_button"));
        let (n, ev) = interact(&s, &far).unwrap();
        assert_eq!(ev.outcome, Outcome::OutOfRange);
        assert_eq!(n, s);
    }

    #[test]
    fn interaction_errors() {
        let s = kitchen();
        let unknown = ActionRequest::new("agent1", Verb::PushDoor, Some("nope"));
        assert_eq!(interact(&s, &unknown).unwrap_err(), SceneError::UnknownEntity("nope".into()));
        let wrong_kind = ActionRequest::new("agent1", Verb::TwistDoor, Some("mug"));
        assert!(matches!(interact(&s, &wrong_kind), Err(SceneError::Inapplicable { .. })));
        let no_target = ActionRequest::new("agent1", Verb::Grasp, None);
        assert_eq!(interact(&s, &no_target).unwrap_err(), SceneError::MissingTarget(Verb::Grasp));
        let (_, ev) = interact(&s, &ActionRequest::new("agent1", Verb::Wave, None)).unwrap();
        assert_eq!(ev.outcome, Outcome::Ok);
    }

    #[test]
    fn attachment_rigid_and_exclusive() {
        let s = kitchen();
        let held = grasp_attach(&s, "agent1", "mug").unwrap();
        assert_eq!(grasp_attach(&held, "agent1", "milk").unwrap_err(), SceneError::HandsFull("agent1".into()));

        let mut moved = held.clone();
        moved.get_mut("door1").unwrap().fluents.insert("open".into(), FluentValue::Bool(true));
        for _ in 0..30 {
            moved.step_in_place(&[VelocityCommand::new("agent1", 2.0, 0.0)], &[]).unwrap();
        }
        let a = moved.get("agent1").unwrap().pose;
        let m = moved.get("mug").unwrap().pose;
        assert!((a.x - 1.0).abs() < 1e-12);
        assert!((m.x - 1.5).abs() < 1e-12 && (m.y + 0.5).abs() < 1e-12);

        let dropped = release(&moved, "agent1").unwrap();
        let m2 = dropped.get("mug").unwrap();
        assert_eq!(m2.attached_to, None);
        assert_eq!(m2.pose, m);
        assert_eq!(release(&dropped, "agent1").unwrap_err(), SceneError::NotHolding("agent1".into()));
    }

    #[test]
    fn second_agent_cannot_steal() {
        let mut s = kitchen();
        s.entities.insert("agent2".into(), Entity::new("agent2", EntityKind::Agent, Pose::new(0.0, -1.2, 0.0), [0.25, 0.25]));
        let s = grasp_attach(&s, "agent1", "mug").unwrap();
        assert!(matches!(grasp_attach(&s, "agent2", "mug"), Err(SceneError::AlreadyAttached { .. })));
    }
}
