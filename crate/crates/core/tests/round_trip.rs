mod common;

use common::*;
use fogcascade::imageio::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(ROUND_TRIP_CASES))]

    #[test]
    fn ppm(img in image_u8()) {
        prop_assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn ptns(t in tensor()) {
        let back = decode_tensor(&encode_tensor(&t)).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert_eq!(bits(&back), bits(&t));
    }

    #[test]
    fn ppwa(map in tensor_map()) {
        let back = decode_weights(&encode_weights(map.iter()).unwrap()).unwrap();
        prop_assert_eq!(back.names().collect::<Vec<_>>(), map.names().collect::<Vec<_>>());
        for (name, t) in map.iter() {
            let b = back.require(name).unwrap();
            prop_assert_eq!(b.shape(), t.shape());
            prop_assert_eq!(bits(b), bits(t));
        }
    }

    #[test]
    fn detections_jsonl(records in proptest::collection::vec(detection_record(), 0..8)) {
        prop_assert_eq!(parse_detections(&format_detections(&records)).unwrap(), records);
    }

    #[test]
    fn manifest_json(m in manifest()) {
        prop_assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn float_image_through_ppm(img in image_u8()) {
        let t = u8_to_float(&img);
        prop_assert_eq!(float_to_u8(&t).unwrap(), img);
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageU8::new(2, 1, vec![0, 1, 2, 253, 254, 255]).unwrap();
    write_ppm(dir.path().join("a.ppm"), &img).unwrap();
    assert_eq!(read_ppm(dir.path().join("a.ppm")).unwrap(), img);
    let recs =
        vec![DetectionRecord { image_id: "x\"y".into(), class_id: 2, score: 0.3, x: -1.5, y: 2.0, w: 3.0, h: 0.25 }];
    write_detections(dir.path().join("d.jsonl"), &recs).unwrap();
    assert_eq!(read_detections(dir.path().join("d.jsonl")).unwrap(), recs);
}
