use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use swarm_infer::experiments::{generate_scenario, ScenarioConfig};
use swarm_infer::{run_stream, solve_exact, HeuristicParams, Template};
use swarm_infer_ffi::*;

fn last_error() -> String {
    let p = si_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generated(uavs: usize, requests: usize, depth: usize, seed: u64) -> *mut SiScenario {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { si_scenario_generate(uavs, requests, depth, false, seed, &mut s) }, SiStatus::Ok);
    assert!(!s.is_null());
    s
}

#[test]
fn solve_through_the_boundary_matches_the_library() {
    let handle = generated(4, 3, 4, 9);
    let native = generate_scenario(&ScenarioConfig::default(), 4, 3, Template::Sequential, 4, 9).unwrap();
    let expected = solve_exact(&native, None).unwrap();
    unsafe {
        assert_eq!(si_scenario_node_count(handle), 4);
        assert_eq!(si_scenario_request_count(handle), 3);
        let mut result = ptr::null_mut();
        assert_eq!(si_solve_exact(handle, 0.0, &mut result), SiStatus::Ok);
        assert_eq!(si_solve_result_status(result), SiSolveStatus::Optimal);
        let mut total = 0.0;
        assert_eq!(si_solve_result_total(result, &mut total), SiStatus::Ok);
        assert_eq!(total, expected.total().unwrap());
        assert_eq!(si_solve_result_nodes_explored(result), expected.nodes_explored);
        for p in &expected.placements {
            let mut nodes = [usize::MAX; 8];
            let mut len = 0;
            let status = si_solve_result_placement(result, p.request, nodes.as_mut_ptr(), nodes.len(), &mut len);
            assert_eq!(status, SiStatus::Ok);
            assert_eq!(&nodes[..len], &p.nodes[..]);
        }
        si_solve_result_free(result);
        si_scenario_free(handle);
    }
}

#[test]
fn small_buffers_report_the_needed_length() {
    let handle = generated(3, 1, 5, 1);
    unsafe {
        let mut result = ptr::null_mut();
        assert_eq!(si_solve_exact(handle, 10.0, &mut result), SiStatus::Ok);
        let mut nodes = [0usize; 2];
        let mut len = 0;
        assert_eq!(si_solve_result_placement(result, 0, nodes.as_mut_ptr(), 2, &mut len), SiStatus::OutOfRange);
        assert_eq!(len, 5);
        assert_eq!(si_solve_result_placement(result, 7, nodes.as_mut_ptr(), 2, &mut len), SiStatus::OutOfRange);
        assert!(last_error().contains("no request 7"));
        si_solve_result_free(result);
        si_scenario_free(handle);
    }
}

#[test]
fn json_round_trip_preserves_the_scenario() {
    let handle = generated(5, 4, 3, 2);
    unsafe {
        let mut text = ptr::null_mut();
        assert_eq!(si_scenario_to_json(handle, &mut text), SiStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(si_scenario_from_json(text, &mut again), SiStatus::Ok);
        let mut text2 = ptr::null_mut();
        assert_eq!(si_scenario_to_json(again, &mut text2), SiStatus::Ok);
        assert_eq!(CStr::from_ptr(text), CStr::from_ptr(text2));
        si_string_free(text);
        si_string_free(text2);
        si_scenario_free(again);
        si_scenario_free(handle);
    }
}

#[test]
fn heuristic_through_the_boundary_matches_the_library() {
    let handle = generated(6, 12, 6, 4);
    let native = generate_scenario(&ScenarioConfig::default(), 6, 12, Template::Sequential, 6, 4).unwrap();
    let expected = run_stream(&native, &HeuristicParams::new(0.7, 0.3).unwrap(), None).unwrap();
    unsafe {
        let mut report = ptr::null_mut();
        assert_eq!(si_run_heuristic(handle, 0.7, 0.3, &mut report), SiStatus::Ok);
        assert_eq!(si_stream_total(report), expected.breakdown.total);
        assert_eq!(si_stream_rejections(report), expected.rejections);
        for o in &expected.outcomes {
            let mut accepted = !o.accepted;
            assert_eq!(si_stream_accepted(report, o.request, &mut accepted), SiStatus::Ok);
            assert_eq!(accepted, o.accepted);
        }
        let mut accepted = false;
        assert_eq!(si_stream_accepted(report, 12, &mut accepted), SiStatus::OutOfRange);
        si_stream_free(report);

        let mut untouched = ptr::null_mut();
        assert_eq!(si_run_heuristic(handle, 0.7, 0.7, &mut untouched), SiStatus::InvalidInput);
        assert!(untouched.is_null());
        si_scenario_free(handle);
    }
}

#[test]
fn infeasible_results_have_no_total() {
    // No node can hold any layer's weights.
    let mut native = generate_scenario(&ScenarioConfig::default(), 3, 2, Template::Sequential, 3, 1).unwrap();
    for n in &mut native.swarm.nodes {
        n.mem_budget = 1;
    }
    let json = CString::new(serde_json::to_string(&native).unwrap()).unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        let status = si_scenario_from_json(json.as_ptr(), &mut s);
        assert_eq!(status, SiStatus::Ok, "{}", last_error());
        let mut result = ptr::null_mut();
        assert_eq!(si_solve_exact(s, 0.0, &mut result), SiStatus::Ok);
        assert_eq!(si_solve_result_status(result), SiSolveStatus::Infeasible);
        let mut total = -1.0;
        assert_eq!(si_solve_result_total(result, &mut total), SiStatus::Infeasible);
        assert_eq!(total, -1.0);
        si_solve_result_free(result);
        si_scenario_free(s);
    }
}

#[test]
fn bad_input_sets_codes_and_messages() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(si_scenario_from_json(ptr::null(), &mut s), SiStatus::NullPointer);
        let bad = CString::new("{\"swarm\": 3}").unwrap();
        assert_eq!(si_scenario_from_json(bad.as_ptr(), &mut s), SiStatus::InvalidInput);
        assert!(!last_error().is_empty());
        let not_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(si_scenario_from_json(not_utf8.as_ptr().cast(), &mut s), SiStatus::InvalidUtf8);
        assert!(s.is_null());
        assert_eq!(si_scenario_generate(0, 1, 3, false, 1, &mut s), SiStatus::InvalidInput);
        assert_eq!(si_scenario_generate(3, 1, 2, true, 1, &mut s), SiStatus::InvalidInput);
        assert_eq!(si_scenario_generate(3, 1, 3, false, 1, ptr::null_mut()), SiStatus::NullPointer);

        let mut result = ptr::null_mut();
        assert_eq!(si_solve_exact(ptr::null(), 0.0, &mut result), SiStatus::NullPointer);
        assert_eq!(last_error(), "null scenario");
        assert_eq!(si_scenario_node_count(ptr::null()), 0);
        assert!(si_stream_total(ptr::null()).is_nan());

        // Success clears the message.
        let ok = generated(2, 1, 2, 1);
        assert!(si_last_error().is_null());
        si_scenario_free(ok);
        si_scenario_free(ptr::null_mut());
        si_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(si_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/swarm_infer.h");
    let text = std::fs::read_to_string(header).unwrap();
    for symbol in ["si_scenario_from_json", "si_solve_exact", "si_run_heuristic", "si_last_error", "SI_STATUS_OUT_OF_RANGE"] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header])
            .output()
        else {
            eprintln!("{compiler} not found; skipping");
            continue;
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
