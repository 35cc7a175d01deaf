use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pushfore"))
}

#[test]
fn help_documents_csv_schemas() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for schema in ["mode,bucket,length,n_train,n_test,train_err,test_err", "model,n_test,mean_err", "run,step,V_pred,V_real,status"] {
        assert!(text.contains(schema), "missing {schema}");
    }
}

#[test]
fn missing_model_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["eval", "--model"]).arg(dir.path().join("absent.slvf")).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn bad_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["collect", "--set", "samples_per_length=abc", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn identity_model_step_response_is_mid_gray() {
    let dir = tempfile::tempdir().unwrap();
    let model = pushfore::foresight::SwitchedLinearModel::<f64>::scaled_identity(4, vec![0.1], 1.0, 0.25).unwrap();
    let path = dir.path().join("id.slvf");
    pushfore::foresight::save_model(&model, &path).unwrap();
    let out = bin().arg("step-response").arg("--model").arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("step_response_k0.csv")).unwrap();
    assert!(csv.lines().all(|l| l.split(',').all(|v| v == "0.5")));
}
