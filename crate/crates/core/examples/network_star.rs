//! Exercise the star network: lossy links, an outage and a rejected
//! agent-to-agent send.

use fleet_cbf::geometry::Vec3;
use fleet_cbf::ids::{AgentId, NodeId};
use fleet_cbf::netsim::{LinkModel, Network, Outage, Payload, Pose};

fn main() {
    let agents = [AgentId::uav(0), AgentId::ugv(0), AgentId::uav(1), AgentId::ugv(1)];
    let model = LinkModel { base_latency: 0.04, jitter: 0.02, drop_prob: 0.1 };
    let mut net = Network::new(model, 42, agents).with_outages(vec![Outage { start: 0.5, end: 0.7 }]);
    for k in 0..100 {
        let now = k as f64 * 0.01;
        for a in agents {
            let pose = Payload::PoseUpdate(Pose::Uav(Vec3::new(now, 0.0, 1.0)));
            net.send(NodeId::Agent(a), NodeId::Watcher, pose, now).unwrap();
        }
        net.deliver_due(now);
    }
    net.deliver_due(f64::INFINITY);
    for ((src, dst), s) in net.link_stats() {
        println!("{src} -> {dst}: sent {} delivered {} dropped {} bytes {}", s.sent, s.delivered, s.dropped, s.bytes);
    }
    let err = net.send(NodeId::Agent(agents[0]), NodeId::Agent(agents[2]), Payload::LandingSignal, 1.0).unwrap_err();
    println!("{err}");
}
