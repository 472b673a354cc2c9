use softgrad_envs::{catalog, make_env, ActionSpace, EnvError, EnvOverrides, TaskId};

#[test]
fn horizons_and_action_spaces() {
    let want = [
        ("pour_water", ActionSpace::LowLevel4, 100),
        ("pour_soup", ActionSpace::LowLevel4, 100),
        ("push_rope", ActionSpace::Macro6, 6),
        ("whip_rope", ActionSpace::LowLevel3, 70),
        ("fold_cloth1", ActionSpace::Macro6, 3),
        ("fold_cloth3", ActionSpace::Macro6, 4),
        ("fold_tshirt", ActionSpace::Macro6, 4),
        ("unfold_cloth1", ActionSpace::Macro6, 10),
        ("unfold_cloth3", ActionSpace::Macro6, 10),
    ];
    let cat = catalog();
    assert_eq!(cat.len(), want.len());
    for (entry, (name, space, horizon)) in cat.iter().zip(want) {
        assert_eq!(entry.id.name(), name);
        assert_eq!(entry.action_space, space);
        assert_eq!(entry.horizon, horizon);
        assert_eq!(entry.action_size, space.dim());
    }
}

#[test]
fn make_env_reports_sizes() {
    for (task, size, horizon) in [(TaskId::PushRope, 6, 6), (TaskId::WhipRope, 3, 70), (TaskId::PourWater, 4, 100)] {
        let env = make_env::<f64>(task, &EnvOverrides::default()).unwrap();
        assert_eq!(env.action_size(), size);
        assert_eq!(env.horizon(), horizon);
    }
}

#[test]
fn unknown_id_lists_valid_ids() {
    let err = "fold_laundry".parse::<TaskId>().unwrap_err();
    match &err {
        EnvError::UnknownTask { id, valid } => {
            assert_eq!(id, "fold_laundry");
            for t in TaskId::ALL {
                assert!(valid.contains(t.name()));
            }
        }
        other => panic!("unexpected {other:?}"),
    }
    for t in TaskId::ALL {
        assert_eq!(t.name().parse::<TaskId>().unwrap(), t);
    }
}

#[test]
fn catalog_serializes_ids_in_snake_case() {
    let json = serde_json::to_string(&catalog()).unwrap();
    assert!(json.contains("\"unfold_cloth3\""));
}

#[test]
fn bad_overrides_are_rejected() {
    let o = EnvOverrides { lambda: Some(-1.0), ..Default::default() };
    assert!(matches!(make_env::<f64>(TaskId::PushRope, &o), Err(EnvError::Override(_))));
    let o = EnvOverrides { phase_durations: Some(vec![0.1; 3]), ..Default::default() };
    assert!(make_env::<f64>(TaskId::FoldCloth1, &o).is_err());
}
