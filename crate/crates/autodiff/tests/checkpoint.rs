use cyto_autodiff::{read_checkpoint, write_checkpoint, ParamStore, Tensor};
use proptest::prelude::*;

proptest! {
    #[test]
    fn checkpoint_round_trips(values in prop::collection::vec(prop::collection::vec(-1e6f32..1e6, 1..20), 1..6)) {
        let mut store = ParamStore::<f32>::new();
        for (i, v) in values.iter().enumerate() {
            store.add(format!("p{i}"), Tensor::new(vec![v.len()], v.clone()).unwrap(), i % 2 == 0);
        }
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store, serde_json::json!({"arch": "x"})).unwrap();
        let (back, meta) = read_checkpoint::<f32>(buf.as_slice()).unwrap();
        prop_assert_eq!(meta["arch"].as_str(), Some("x"));
        prop_assert_eq!(back.len(), store.len());
        for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(&a.value, &b.value);
            prop_assert_eq!(a.trainable, b.trainable);
        }
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back, serde_json::json!({"arch": "x"})).unwrap();
        prop_assert_eq!(buf, again);
    }
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let mut store = ParamStore::<f32>::new();
    store.add("w", Tensor::zeros(&[10]), true);
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &store, serde_json::Value::Null).unwrap();
    buf.truncate(buf.len() - 4);
    assert!(read_checkpoint::<f32>(buf.as_slice()).is_err());
}
