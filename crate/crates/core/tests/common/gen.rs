use elastic_core::wireproto::{Call, Fields, LaunchDirective, Message, RpcError, RpcResponse, ScaleCommand, ScaleMode, Value};
use proptest::prelude::*;

// Frames computed independently (sorted-key compact JSON, big-endian length).
pub const GOLDEN: [(&str, &str); 6] = [
    ("00000040", r#"{"id":1,"method":"Scale","params":{"mode":"absolute","nodes":4}}"#),
    ("00000060", r#"{"id":2,"method":"RetrieveKeys","params":{"address":"127.0.0.1:7000","node_name":"job-scale-0"}}"#),
    ("00000041", r#"{"id":3,"method":"JobInit","params":{"node_name":"job-worker-0"}}"#),
    ("0000002c", r#"{"id":4,"method":"activeServer","params":{}}"#),
    ("00000047", r#"{"id":5,"method":"checkpointing","params":{"node_name":"job-worker-1"}}"#),
    ("00000041", r#"{"id":6,"method":"endExec","params":{"node_name":"job-worker-1"}}"#),
];

pub fn golden_calls() -> [Call; 6] {
    [
        Call::Scale(ScaleCommand::absolute(4)),
        Call::RetrieveKeys { node_name: "job-scale-0".into(), address: "127.0.0.1:7000".into() },
        Call::JobInit { node_name: "job-worker-0".into(), address: None },
        Call::ActiveServer { node_name: None },
        Call::Checkpointing { node_name: "job-worker-1".into(), ok: None },
        Call::EndExec { node_name: "job-worker-1".into(), status: None },
    ]
}

pub fn node_name() -> impl Strategy<Value = String> {
    ("[a-z][a-z0-9-]{0,8}", prop_oneof![Just("worker"), Just("scale")], 0u32..100).prop_map(|(j, r, k)| format!("{j}-{r}-{k}"))
}

pub fn address() -> impl Strategy<Value = String> {
    ("[a-z0-9.]{1,12}", any::<u16>()).prop_map(|(h, p)| format!("{h}:{p}"))
}

pub fn call() -> impl Strategy<Value = Call> {
    prop_oneof![
        (1u32..1000, any::<bool>()).prop_map(|(n, d)| Call::Scale(ScaleCommand {
            nodes: n,
            mode: if d { ScaleMode::Delta } else { ScaleMode::Absolute }
        })),
        (node_name(), address()).prop_map(|(node_name, address)| Call::RetrieveKeys { node_name, address }),
        (node_name(), proptest::option::of(address())).prop_map(|(node_name, address)| Call::JobInit { node_name, address }),
        proptest::option::of(node_name()).prop_map(|node_name| Call::ActiveServer { node_name }),
        (node_name(), proptest::option::of(any::<bool>())).prop_map(|(node_name, ok)| Call::Checkpointing { node_name, ok }),
        (node_name(), proptest::option::of(any::<i64>())).prop_map(|(node_name, status)| Call::EndExec { node_name, status }),
        (1u32..64, any::<u32>(), proptest::collection::vec(".{0,12}", 1..5), any::<bool>(), ".{0,20}", "[0-9a-f]{64}", any::<u32>())
            .prop_map(|(world_size, r, command, restart, rendezvous_dir, token, epoch)| Call::Launch(LaunchDirective {
                rank: r % world_size,
                world_size,
                command,
                restart,
                rendezvous_dir,
                token,
                epoch
            })),
        ("SIG[A-Z0-9]{2,6}", 0u64..1 << 40, "[0-9a-f]{64}").prop_map(|(signal, grace_ms, token)| Call::Checkpoint {
            signal,
            grace_ms,
            token
        }),
    ]
}

pub fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        ".{0,16}".prop_map(Value::Str),
    ];
    leaf.prop_recursive(2, 8, 4, |inner| proptest::collection::vec(inner, 0..4).prop_map(Value::List))
}

pub fn fields() -> impl Strategy<Value = Fields> {
    proptest::collection::btree_map(".{0,10}", value(), 0..6)
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (any::<u64>(), call()).prop_map(|(id, c)| Message::Request(c.into_request(id))),
        (any::<u64>(), fields()).prop_map(|(id, f)| Message::Response(RpcResponse { id, outcome: Ok(f) })),
        (any::<u64>(), "[A-Za-z]{1,16}", ".{0,30}")
            .prop_map(|(id, code, msg)| Message::Response(RpcResponse { id, outcome: Err(RpcError::new(code, msg)) })),
    ]
}

