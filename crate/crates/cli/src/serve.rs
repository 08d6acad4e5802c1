use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use log::{debug, info, warn};
use vrgl_bridge::codec::Envelope;
use vrgl_bridge::{run_peer, topics, Broker, BridgeClient, BridgeError, PeerHandle, RESPONSE_TYPE};
use vrgl_core::datalog::{Recorder, SessionLog, IDLE_ODOM_PERIOD};
use vrgl_core::intent::{
    goals_from_scene, predict_grammar, predict_perpendicular, predict_straightline, IntentParams, PosteriorLine,
    TaskGrammar,
};
use vrgl_core::scene::{
    load_scene, occupancy_grid, scene_hash, ActionRequest, Cell, EntityKind, OccupancyGrid, Outcome, Pose, SceneGraph,
    SimEvent, VelocityCommand, Verb, DT, TICK_HZ,
};
use vrgl_core::social::{ResponseKind, ResponsePrimitive, SignalKind, SignalPayload};

use crate::protocol::*;
use crate::{read_input, usage, Algo, CliError, CliResult, ServeArgs};

/// A velocity command keeps driving its agent this long without a refresh.
pub const CMD_HOLD_TICKS: u64 = TICK_HZ / 2;
/// Ticks simulated back to back after a stall before the clock is reset.
const MAX_CATCH_UP: u32 = 5;
const PREDICT_RESOLUTION: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: IpAddr,
    pub tcp: u16,
    pub ws: u16,
    pub hz: u32,
    pub static_dir: Option<PathBuf>,
    pub social: Vec<String>,
    /// Agent whose goal posterior is published, and the predictor.
    pub predict: Option<(String, Algo)>,
    pub goals: Vec<String>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            bind: IpAddr::from([127, 0, 0, 1]),
            tcp: 0,
            ws: 0,
            hz: 20,
            static_dir: None,
            social: Vec::new(),
            predict: None,
            goals: Vec::new(),
        }
    }
}

/// Broker, WebSocket gateway, simulator loop and social peers.
pub struct Server {
    broker: Broker,
    ws: SocketAddr,
    stop: Arc<AtomicBool>,
    sim: Option<JoinHandle<anyhow::Result<()>>>,
    peers: Vec<PeerHandle>,
}

impl Server {
    /// Start serving `document`. Returns once the simulator is subscribed.
    pub fn start(document: String, opts: ServeOptions) -> CliResult<Server> {
        if opts.hz == 0 || opts.hz > TICK_HZ as u32 {
            return Err(usage(format!("--hz must lie in 1..={TICK_HZ}")));
        }
        let initial = load_scene(&document).map_err(|e| usage(format!("scene: {e}")))?;
        let broker = Broker::bind(SocketAddr::new(opts.bind, opts.tcp))
            .with_context(|| format!("bind tcp port {}", opts.tcp))?;
        let ws = broker
            .serve_ws(SocketAddr::new(opts.bind, opts.ws), opts.static_dir.clone())
            .with_context(|| format!("bind websocket port {}", opts.ws))?;
        let endpoint = broker.local_addr();
        let stop = Arc::new(AtomicBool::new(false));
        let (ready_tx, ready_rx) = mpsc::channel();
        let sim = {
            let stop = stop.clone();
            let opts = opts.clone();
            thread::Builder::new()
                .name("sim".into())
                .spawn(move || sim_main(endpoint, document, initial, opts, &stop, ready_tx))
                .expect("spawn simulator")
        };
        match ready_rx.recv_timeout(Duration::from_secs(10)) {
            Ok(()) => {}
            Err(_) => {
                stop.store(true, Ordering::SeqCst);
                let err = match sim.join() {
                    Ok(Err(e)) => e,
                    _ => anyhow!("simulator did not start"),
                };
                return Err(CliError::Runtime(err));
            }
        }
        let peers = opts.social.iter().map(|id| run_peer(endpoint, id)).collect();
        Ok(Server { broker, ws, stop, sim: Some(sim), peers })
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.broker.local_addr()
    }

    pub fn ws_addr(&self) -> SocketAddr {
        self.ws
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Stop the simulator (closing any active recording) and the broker.
    pub fn shutdown(mut self) -> anyhow::Result<()> {
        self.halt()
    }

    fn halt(&mut self) -> anyhow::Result<()> {
        self.stop.store(true, Ordering::SeqCst);
        for p in self.peers.drain(..) {
            p.stop();
        }
        let r = match self.sim.take() {
            Some(h) => h.join().unwrap_or_else(|_| Err(anyhow!("simulator panicked"))),
            None => Ok(()),
        };
        self.broker.shutdown();
        r
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Err(e) = self.halt() {
            warn!("server shutdown: {e:#}");
        }
    }
}

pub fn run(args: &ServeArgs) -> CliResult {
    let document = read_input(&args.scene)?;
    let opts = ServeOptions {
        bind: args.bind,
        tcp: args.tcp,
        ws: args.ws,
        hz: args.hz,
        static_dir: args.static_dir.clone(),
        social: args.social.clone(),
        predict: args.predict_agent.clone().map(|a| (a, args.predict_algo)),
        goals: args.goals.clone(),
    };
    let server = Server::start(document, opts)?;
    println!("listening tcp={} ws={}", server.tcp_addr(), server.ws_addr());
    let stop = server.stop_flag();
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)).context("install Ctrl-C handler")?;
    }
    let deadline = args.duration.map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0)));
    while !stop.load(Ordering::SeqCst) && deadline.is_none_or(|d| Instant::now() < d) {
        thread::sleep(Duration::from_millis(20));
    }
    info!("shutting down");
    server.shutdown()?;
    Ok(())
}

struct Active {
    id: String,
    recorder: Recorder,
    published: usize,
}

enum World {
    Free(SceneGraph),
    Recording(Active),
}

impl World {
    fn scene(&self) -> &SceneGraph {
        match self {
            World::Free(s) => s,
            World::Recording(a) => a.recorder.scene(),
        }
    }
}

struct Sim {
    hash: String,
    initial: SceneGraph,
    world: Option<World>,
    used_sessions: BTreeSet<String>,
    held: BTreeMap<String, (VelocityCommand, u64)>,
    actions: Vec<ActionRequest>,
    last_odom: BTreeMap<String, Pose>,
    predictor: Option<LivePredictor>,
}

fn sim_main(
    endpoint: SocketAddr,
    document: String,
    initial: SceneGraph,
    opts: ServeOptions,
    stop: &AtomicBool,
    ready: mpsc::Sender<()>,
) -> anyhow::Result<()> {
    let mut client = BridgeClient::connect(endpoint).context("simulator connect")?;
    for t in [topics::SNAPSHOT, topics::EVENTS] {
        client.advertise(t, if t == topics::SNAPSHOT { SNAPSHOT_TYPE } else { SIM_EVENT_TYPE })?;
    }
    for p in ["/agent/*/cmd", "/agent/*/action", topics::ANY_SIGNAL, SESSION_CONTROL] {
        client.subscribe(p)?;
    }
    client.ping(Duration::from_secs(5)).context("simulator subscribe")?;
    let predictor = opts.predict.as_ref().map(|(agent, algo)| LivePredictor::new(&initial, agent, *algo, &opts.goals));
    let mut sim = Sim {
        hash: scene_hash(&document),
        world: Some(World::Free(initial.clone())),
        initial,
        used_sessions: BTreeSet::new(),
        held: BTreeMap::new(),
        actions: Vec::new(),
        last_odom: BTreeMap::new(),
        predictor,
    };
    let _ = ready.send(());

    let tick_period = Duration::from_secs_f64(DT);
    let mut next = Instant::now() + tick_period;
    let mut result = Ok(());
    while !stop.load(Ordering::SeqCst) {
        // wait for the next tick on the socket so requests are handled promptly
        let now = Instant::now();
        if now < next {
            match client.recv_timeout(next - now) {
                Ok(Some(env)) => sim.handle(&mut client, env)?,
                Ok(None) => {}
                Err(BridgeError::Codec(e)) => debug!("simulator dropped a frame: {e}"),
                Err(e) => {
                    result = Err(anyhow!("simulator lost the broker: {e}"));
                    break;
                }
            }
            continue;
        }
        let mut n = 0;
        while Instant::now() >= next && n < MAX_CATCH_UP {
            sim.tick(&mut client, opts.hz)?;
            next += tick_period;
            n += 1;
        }
        if n == MAX_CATCH_UP {
            next = Instant::now() + tick_period;
        }
    }
    if let Some(World::Recording(_)) = &sim.world {
        sim.stop_session(&mut client)?;
    }
    client.shutdown();
    result
}

impl Sim {
    fn scene(&self) -> &SceneGraph {
        self.world.as_ref().expect("world present").scene()
    }

    fn has_agent(&self, id: &str) -> bool {
        self.scene().agent(id).is_ok()
    }

    fn handle(&mut self, client: &mut BridgeClient, env: Envelope) -> anyhow::Result<()> {
        if env.topic == SESSION_CONTROL {
            match serde_json::from_value::<SessionRequest>(env.data) {
                Ok(SessionRequest::Start { session, subject }) => self.start_session(client, session, subject)?,
                Ok(SessionRequest::Stop { session }) => match &self.world {
                    Some(World::Recording(a)) if a.id == session => self.stop_session(client)?,
                    _ => status(client, &session, SessionStatus::Error { message: "session is not recording".into() })?,
                },
                Err(e) => debug!("ignoring malformed session request: {e}"),
            }
            return Ok(());
        }
        let mut parts = env.topic.split('/').skip(1);
        let (Some("agent"), Some(agent), Some(kind), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Ok(());
        };
        if !self.has_agent(agent) {
            debug!("ignoring {} for unknown agent", env.topic);
            return Ok(());
        }
        let agent = agent.to_owned();
        match (kind, env.msg_type.as_str()) {
            ("cmd", _) => match serde_json::from_value::<CmdPayload>(env.data) {
                Ok(c) => {
                    let until = self.scene().tick + CMD_HOLD_TICKS;
                    self.held.insert(agent.clone(), (VelocityCommand::new(&agent, c.v, c.omega), until));
                }
                Err(e) => debug!("ignoring malformed command: {e}"),
            },
            ("action", ACTION_REQUEST_TYPE) => match serde_json::from_value::<ActionPayload>(env.data) {
                Ok(a) => {
                    let target = a.target.or_else(|| self.default_target(&agent, a.verb));
                    self.actions.push(ActionRequest::new(&agent, a.verb, target.as_deref()));
                }
                Err(e) => debug!("ignoring malformed action request: {e}"),
            },
            // a social peer's response is acted out by the agent of that id
            ("action", RESPONSE_TYPE) => match serde_json::from_value::<ResponsePrimitive>(env.data) {
                Ok(p) => {
                    let verb = match p.kind {
                        ResponseKind::WaveBack => Some(Verb::Wave),
                        ResponseKind::HandshakeReach => Some(Verb::Stretch),
                        ResponseKind::Idle => None,
                    };
                    if let Some(v) = verb {
                        self.actions.push(ActionRequest::new(&agent, v, None));
                    }
                }
                Err(e) => debug!("ignoring malformed response primitive: {e}"),
            },
            ("signal", _) => match serde_json::from_value::<SignalPayload>(env.data) {
                Ok(s) => {
                    let verb = match s.kind {
                        SignalKind::Wave => Verb::Wave,
                        SignalKind::Stretch => Verb::Stretch,
                    };
                    self.actions.push(ActionRequest::new(&agent, verb, None));
                }
                Err(e) => debug!("ignoring malformed signal: {e}"),
            },
            _ => {}
        }
        Ok(())
    }

    /// Nearest entity a verb can apply to; the held object for `release`.
    fn default_target(&self, agent: &str, verb: Verb) -> Option<String> {
        let scene = self.scene();
        if !verb.needs_target() {
            return None;
        }
        if verb == Verb::Release {
            return scene.held_by(agent).map(|e| e.id.clone());
        }
        let me = scene.get(agent)?;
        let want = match verb {
            Verb::PushDoor | Verb::TwistDoor => EntityKind::Door,
            _ => EntityKind::Object,
        };
        scene
            .entities
            .values()
            .filter(|e| e.kind == want && e.attached_to.is_none() && e.fluent("goal").is_none())
            .map(|e| (me.pose.distance_to(&e.pose), &e.id))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, id)| id.clone())
    }

    fn start_session(&mut self, client: &mut BridgeClient, id: String, subject: String) -> anyhow::Result<()> {
        if let Some(World::Recording(a)) = &self.world {
            let message = format!("session `{}` is already recording", a.id);
            return status(client, &id, SessionStatus::Error { message });
        }
        if !self.used_sessions.insert(id.clone()) {
            return status(client, &id, SessionStatus::Error { message: format!("duplicate session id `{id}`") });
        }
        // recording starts from the document so the log replays against it
        let tick = self.scene().tick;
        let mut scene = self.initial.clone();
        scene.tick = tick;
        let recorder = Recorder::new(scene, SessionLog::new(&id, subject, &self.hash))?;
        info!("recording session {id}");
        status(client, &id, SessionStatus::Recording { scene_hash: self.hash.clone(), tick })?;
        let mut active = Active { id, recorder, published: 0 };
        publish_records(client, &mut active)?;
        self.world = Some(World::Recording(active));
        self.last_odom.clear();
        Ok(())
    }

    fn stop_session(&mut self, client: &mut BridgeClient) -> anyhow::Result<()> {
        let Some(World::Recording(mut a)) = self.world.take() else { return Ok(()) };
        publish_records(client, &mut a)?;
        let records = a.recorder.log().len() as u64;
        status(client, &a.id, SessionStatus::Stopped { records })?;
        info!("session {} stopped after {records} records", a.id);
        self.world = Some(World::Free(a.recorder.into_parts().0));
        Ok(())
    }

    fn tick(&mut self, client: &mut BridgeClient, hz: u32) -> anyhow::Result<()> {
        let tick = self.scene().tick;
        self.held.retain(|_, (_, until)| *until > tick);
        let cmds: Vec<VelocityCommand> = self.held.values().map(|(c, _)| c.clone()).collect();
        let actions = std::mem::take(&mut self.actions);
        let events = match self.world.as_mut().expect("world present") {
            World::Free(scene) => scene.step_in_place(&cmds, &actions)?,
            World::Recording(a) => {
                let ev = a.recorder.step(&cmds, &actions)?;
                publish_records(client, a)?;
                ev
            }
        };
        for ev in &events {
            client.publish(topics::EVENTS, SIM_EVENT_TYPE, serde_json::to_value(ev)?)?;
            if let SimEvent::Action(a) = ev {
                client.publish(&topics::agent_action(&a.agent_id), ACTION_EVENT_TYPE, serde_json::to_value(a)?)?;
            }
        }
        let scene = self.world.as_ref().expect("world present").scene();
        let now = scene.tick;
        let periodic = now % IDLE_ODOM_PERIOD == 0;
        let mut odom = Vec::new();
        for a in scene.agents() {
            if periodic || self.last_odom.get(&a.id) != Some(&a.pose) {
                odom.push((a.id.clone(), a.pose));
            }
        }
        for (id, p) in odom {
            let data = OdomPayload { tick: now, x: p.x, y: p.y, yaw: p.yaw };
            client.publish(&topics::agent_odom(&id), ODOM_TYPE, serde_json::to_value(data)?)?;
            self.last_odom.insert(id, p);
        }
        // publish when floor(tick·hz/60) advances
        if (now * hz as u64) / TICK_HZ != ((now - 1) * hz as u64) / TICK_HZ {
            let scene = self.scene().clone();
            client.publish(topics::SNAPSHOT, SNAPSHOT_TYPE, scene.snapshot_json())?;
            if let Some(p) = &mut self.predictor {
                p.observe(&events);
                if let Some(line) = p.predict(&scene) {
                    client.publish(&posterior(&p.agent), POSTERIOR_TYPE, serde_json::to_value(line)?)?;
                }
            }
        } else if let Some(p) = &mut self.predictor {
            p.observe(&events);
        }
        Ok(())
    }
}

fn status(client: &mut BridgeClient, id: &str, s: SessionStatus) -> anyhow::Result<()> {
    if let SessionStatus::Error { message } = &s {
        warn!("session {id}: {message}");
    }
    client.publish(&session_status(id), SESSION_STATUS_TYPE, serde_json::to_value(&s)?)?;
    Ok(())
}

fn publish_records(client: &mut BridgeClient, a: &mut Active) -> anyhow::Result<()> {
    let topic = session_log(&a.id);
    let records = a.recorder.log().records();
    for r in &records[a.published..] {
        client.publish(&topic, LOG_RECORD_TYPE, serde_json::to_value(r)?)?;
    }
    a.published = records.len();
    Ok(())
}

/// Goal posterior of one agent from its live pose and, for the grammar
/// predictor, its path and completed subgoals.
struct LivePredictor {
    agent: String,
    algo: Algo,
    goals: Vec<String>,
    grammar: TaskGrammar,
    grid: OccupancyGrid,
    params: IntentParams,
    prefix: Vec<Cell>,
    completed: Vec<String>,
    failed: bool,
}

impl LivePredictor {
    fn new(scene: &SceneGraph, agent: &str, algo: Algo, goals: &[String]) -> Self {
        let grammar = TaskGrammar::coffee();
        let goals = if goals.is_empty() { grammar.subgoals.clone() } else { goals.to_vec() };
        let grammar = if goals == grammar.subgoals { grammar } else { TaskGrammar::unordered(goals.clone()) };
        Self {
            agent: agent.to_owned(),
            algo,
            goals,
            grammar,
            grid: occupancy_grid(scene, PREDICT_RESOLUTION),
            params: IntentParams::default(),
            prefix: Vec::new(),
            completed: Vec::new(),
            failed: false,
        }
    }

    fn observe(&mut self, events: &[SimEvent]) {
        for ev in events {
            if let SimEvent::Action(a) = ev {
                if a.agent_id == self.agent && a.outcome == Outcome::Ok {
                    if let Some(t) = &a.target_id {
                        if self.grammar.subgoals.contains(t) && !self.completed.contains(t) {
                            self.completed.push(t.clone());
                            self.prefix.drain(..self.prefix.len().saturating_sub(1));
                        }
                    }
                }
            }
        }
    }

    fn predict(&mut self, scene: &SceneGraph) -> Option<PosteriorLine> {
        if self.failed {
            return None;
        }
        let pose = scene.get(&self.agent)?.pose;
        let result = goals_from_scene(scene, &self.goals).and_then(|goals| match self.algo {
            Algo::Line => predict_straightline([pose.x, pose.y], &goals, self.params.beta),
            Algo::Perp => predict_perpendicular([pose.x, pose.y], pose.heading(), &goals, self.params.beta, self.params.back_penalty),
            Algo::Grammar => {
                if let Some(c) = self.grid.cell_at([pose.x, pose.y]) {
                    if self.prefix.last() != Some(&c) {
                        self.prefix.push(c);
                    }
                }
                if self.completed.len() == self.grammar.subgoals.len() {
                    return Err(vrgl_core::intent::IntentError::EmptyGoals);
                }
                predict_grammar(&self.prefix, &self.grammar, &self.completed, &goals, &self.grid, &self.params)
            }
        });
        match result {
            Ok(p) => Some(PosteriorLine { t: scene.tick, posterior: p.to_map() }),
            Err(e) => {
                warn!("live prediction disabled: {e}");
                self.failed = true;
                None
            }
        }
    }
}
