//! Serves the reference endpoint over TCP in a background thread, then talks
//! to it like any out-of-process predictor: handshake, prediction and the
//! conformance probe.
//!
//! ```text
//! cargo run --example external_predictor -- [causal-cv|peeking]
//! ```

use std::io::BufReader;
use std::net::TcpListener;
use std::thread;

use ibp::extproto::{make_external, probe, EndpointDescriptor, RefMode, RefPredictor};
use ibp::idm::plan_accelerate;
use ibp::predictors::{PredictionQuery, Predictor};
use ibp::{Scenario, SeedKey};

fn main() -> ibp::Result<()> {
    let mode: RefMode = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "causal-cv".into())
        .parse()
        .expect("mode");
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let address = listener.local_addr()?.to_string();
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            thread::spawn(move || {
                let reader = BufReader::new(stream.try_clone().expect("clone stream"));
                let _ = RefPredictor::new(mode).serve(reader, stream);
            });
        }
    });

    let endpoint = EndpointDescriptor::tcp(&address);
    let predictor = make_external(&endpoint)?;
    println!("connected to {}: {:?}", endpoint.describe(), predictor.capabilities());

    let sc = Scenario::paper_toy();
    let query = PredictionQuery {
        scenario: sc,
        robot_future: plan_accelerate(&sc, 5.0, 10.0)?,
        k: 3,
        seed: SeedKey::new(1),
    };
    for (i, t) in predictor.predict(&query)?.samples.iter().enumerate() {
        let s: Vec<String> = t.states.iter().map(|x| format!("{:.1}", x.s)).collect();
        println!("sample {i}: {}", s.join(" "));
    }

    print!("{}", probe(&endpoint).to_text());
    Ok(())
}
