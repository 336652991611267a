import json

from quicprobe.traces import (
    RunCorpus,
    Trace,
    TraceBuilder,
    metric_handshake_success,
    metric_outcomes,
    metric_versions_over_time,
    outcomes_to_csv,
    read_corpus,
    render_grid,
    write_trace,
)

from .corpus_fixtures import (
    D1,
    D3,
    EXPECTED_HANDSHAKE_SUCCESS,
    EXPECTED_OUTCOMES,
    EXPECTED_TESTED,
    EXPECTED_VERSIONS_ROWS,
    build_synthetic_corpus,
    make_trace,
)


def corpus() -> RunCorpus:
    return RunCorpus(traces=build_synthetic_corpus())


class TestPersistence:
    def test_write_read_round_trip(self, tmp_path):
        trace = make_trace(D1, "alpha", "handshake", 0, {"versions": [1, 0x51474F]})
        trace.packets.append(
            {"direction": "tx", "timestamp_ms": 1, "level": "initial", "cleartext_hex": "c0", "dcid_len": 8}
        )
        path = write_trace(trace, tmp_path)
        assert path.parent.name == D1
        loaded, warnings = read_corpus(tmp_path)
        assert warnings == []
        assert loaded.traces == [trace]

    def test_unknown_fields_preserved(self, tmp_path):
        trace = make_trace(D1, "alpha", "handshake", 0)
        doc = trace.to_json()
        doc["x-custom-annotation"] = {"who": "future tool"}
        path = tmp_path / D1 / "alpha_handshake.json"
        path.parent.mkdir(parents=True)
        path.write_text(json.dumps(doc))
        loaded, _ = read_corpus(tmp_path)
        assert loaded.traces[0].extra == {"x-custom-annotation": {"who": "future tool"}}
        assert loaded.traces[0].to_json()["x-custom-annotation"] == {"who": "future tool"}

    def test_corrupt_file_skipped_with_warning(self, tmp_path):
        for i in range(9):
            write_trace(make_trace(D1, f"t{i}", "handshake", 0), tmp_path)
        bad = tmp_path / D1 / "broken.json"
        bad.write_text("{not json")
        loaded, warnings = read_corpus(tmp_path)
        assert len(loaded.traces) == 9
        assert len(warnings) == 1 and "broken.json" in warnings[0]

    def test_duplicate_key_skipped_with_warning(self, tmp_path):
        write_trace(make_trace(D1, "alpha", "handshake", 0), tmp_path)
        dup = tmp_path / D1 / "zzz_duplicate.json"
        dup.write_text(json.dumps(make_trace(D1, "alpha", "handshake", 5).to_json()))
        loaded, warnings = read_corpus(tmp_path)
        assert len(loaded.traces) == 1
        assert loaded.traces[0].error_code == 0
        assert len(warnings) == 1

    def test_vn_results_preserved_exactly(self, tmp_path):
        versions = [1, 0xFF00001D, 0x709A50C4]
        trace = make_trace(D1, "alpha", "version_negotiation", 0, {"versions": versions})
        write_trace(trace, tmp_path)
        loaded, _ = read_corpus(tmp_path)
        assert loaded.traces[0].results["versions"] == versions

    def test_trace_builder_offsets_and_notes(self):
        builder = TraceBuilder("handshake", 1, {"name": "x", "host": "h", "port": 1})
        builder.log_packet("tx", "initial", b"\xc0\x00", 8)
        builder.log_undecryptable("one_rtt", b"\xff")
        builder.note("agent_error", {"agent": "tls"})
        trace = builder.finalize(0, {"ok": True})
        assert trace.packets[0]["cleartext_hex"] == "c000"
        assert trace.packets[1]["decrypt_error"] is True
        assert trace.notes[0]["kind"] == "agent_error"
        assert trace.error_code == 0


class TestMetrics:
    def test_versions_over_time_matches_hand_count(self):
        table = metric_versions_over_time(corpus())
        assert table.rows == EXPECTED_VERSIONS_ROWS
        assert table.tested == EXPECTED_TESTED

    def test_versions_empty_corpus(self):
        table = metric_versions_over_time(RunCorpus())
        assert table.rows == [] and table.tested == []

    def test_handshake_success_matches_hand_count(self):
        assert metric_handshake_success(corpus()) == EXPECTED_HANDSHAKE_SUCCESS

    def test_outcomes_match_hand_computation(self):
        rows = metric_outcomes(corpus())
        got = [
            (r.date, round(r.success_pct, 6), round(r.failure_pct, 6), round(r.error_pct, 6), r.endpoints, r.tests)
            for r in rows
        ]
        assert got == EXPECTED_OUTCOMES

    def test_outcome_percentages_sum_to_100(self):
        for row in metric_outcomes(corpus()):
            assert abs(row.success_pct + row.failure_pct + row.error_pct - 100.0) < 0.1

    def test_outcomes_csv_shape(self):
        text = outcomes_to_csv(metric_outcomes(corpus()))
        lines = text.strip().splitlines()
        assert lines[0] == "date,success_pct,failure_pct,error_pct,endpoints,tests"
        assert lines[1] == f"{D1},60.0,20.0,20.0,2,10"

    def test_metrics_idempotent(self):
        c = corpus()
        assert metric_versions_over_time(c) == metric_versions_over_time(c)
        assert metric_outcomes(c) == metric_outcomes(c)


class TestGrid:
    def test_two_success_endpoint_shows_two_success_cells(self):
        html_doc, csv_doc = render_grid(corpus(), D3)
        # delta column in the CSV: exactly two zeros
        lines = csv_doc.strip().splitlines()
        header = lines[0].split(",")
        delta_col = header.index("delta")
        codes = [line.split(",")[delta_col] for line in lines[1:]]
        assert codes.count("0") == 2

    def test_full_pass_endpoint_all_success(self):
        _, csv_doc = render_grid(corpus(), D1)
        lines = csv_doc.strip().splitlines()
        alpha_col = lines[0].split(",").index("alpha")
        codes = [line.split(",")[alpha_col] for line in lines[1:]]
        assert all(c == "0" for c in codes)

    def test_missing_pair_is_blank_not_error(self):
        _, csv_doc = render_grid(corpus(), D1)
        lines = csv_doc.strip().splitlines()
        gamma_col = lines[0].split(",").index("gamma")
        vn_row = next(line for line in lines[1:] if line.startswith("version_negotiation"))
        assert vn_row.split(",")[gamma_col] == ""

    def test_html_links_and_colors(self):
        html_doc, _ = render_grid(corpus(), D1)
        assert f"{D1}/alpha_handshake.json" in html_doc
        assert "background:#c8e6c9" in html_doc  # success
        assert "background:#ffcdd2" in html_doc  # failure
        assert "background:#ffe0b2" in html_doc  # error
