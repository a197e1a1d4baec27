use gradcode::net::codec::{decode, encode, read_frame, Frame, Message, WorkerAssignment};
use proptest::prelude::*;

fn vector() -> impl Strategy<Value = Vec<f64>> {
    // arbitrary bit patterns, NaNs included, compared bitwise below
    proptest::collection::vec(any::<u64>().prop_map(f64::from_bits), 0..64)
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        any::<u32>().prop_map(|worker_id| Message::Hello { worker_id }),
        (
            any::<u32>(),
            any::<u32>(),
            proptest::collection::vec(any::<u32>(), 0..32)
        )
            .prop_map(|(worker_id, block_id, indices)| Message::Assign(WorkerAssignment {
                worker_id,
                block_id,
                indices
            })),
        vector().prop_map(|x| Message::Model { x }),
        (any::<u32>(), any::<u32>(), vector()).prop_map(|(worker_id, block_id, y)| Message::Gradient {
            worker_id,
            block_id,
            y
        }),
        Just(Message::Stop),
    ]
}

fn bits(m: &Message) -> Vec<u64> {
    match m {
        Message::Model { x } => x.iter().map(|v| v.to_bits()).collect(),
        Message::Gradient { y, .. } => y.iter().map(|v| v.to_bits()).collect(),
        _ => vec![],
    }
}

fn same(a: &Frame, b: &Frame) -> bool {
    let header = match (&a.msg, &b.msg) {
        (Message::Model { .. }, Message::Model { .. }) => true,
        (
            Message::Gradient {
                worker_id: w1,
                block_id: b1,
                ..
            },
            Message::Gradient {
                worker_id: w2,
                block_id: b2,
                ..
            },
        ) => w1 == w2 && b1 == b2,
        (x, y) => x == y,
    };
    a.round == b.round && header && bits(&a.msg) == bits(&b.msg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn frames_round_trip(round in any::<u64>(), msg in message()) {
        let frame = Frame::new(round, msg);
        let bytes = encode(&frame).unwrap();
        prop_assert!(same(&decode(&bytes).unwrap(), &frame));
        let mut stream = &bytes[..];
        prop_assert!(same(&read_frame(&mut stream).unwrap().unwrap(), &frame));
    }

    #[test]
    fn truncation_is_always_detected(round in any::<u64>(), msg in message(), cut in any::<prop::sample::Index>()) {
        let bytes = encode(&Frame::new(round, msg)).unwrap();
        let cut = cut.index(bytes.len());
        prop_assert!(decode(&bytes[..cut]).is_err());
    }
}
