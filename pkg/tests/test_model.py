import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from ghaudit.model import (ActionKind, MalformedYaml, NotAWorkflow, PermissionMode,
                           RefKind, SecretScope, classify_action_ref,
                           extract_secret_usages, parse_workflow)

SHA = "8f4b7f84864484a7bf31766abe9204da3cbe65b3"


class TestParseWorkflow:
    def test_minimal_workflow(self):
        model = parse_workflow("jobs:\n  build:\n    steps:\n      - run: echo hi\n", "x.yml")
        assert list(model.jobs) == ["build"]
        job = model.jobs["build"]
        assert len(job.steps) == 1
        assert job.steps[0].run.text == "echo hi"
        assert job.runs_on == ()
        assert any(d.code == "MISSING_RUNS_ON" for d in model.diagnostics)

    def test_not_a_workflow(self):
        with pytest.raises(NotAWorkflow):
            parse_workflow("foo: bar\n")

    def test_scalar_document_not_a_workflow(self):
        with pytest.raises(NotAWorkflow):
            parse_workflow("just a string\n")

    def test_malformed_yaml(self):
        with pytest.raises(MalformedYaml):
            parse_workflow("jobs: [unclosed\n")

    def test_write_all_permissions(self):
        model = parse_workflow("on: push\npermissions: write-all\njobs: {}\n")
        assert model.global_permissions.mode is PermissionMode.WRITE_ALL

    def test_read_all_and_scoped_permissions(self):
        model = parse_workflow("on: push\npermissions: read-all\njobs: {}\n")
        assert model.global_permissions.mode is PermissionMode.READ_ALL
        scoped = parse_workflow(
            "on: push\npermissions:\n  contents: read\n  issues: write\njobs: {}\n")
        assert scoped.global_permissions.mode is PermissionMode.SCOPED
        assert scoped.global_permissions.scopes == {"contents": "read", "issues": "write"}

    def test_empty_permissions_mapping(self):
        model = parse_workflow("on: push\npermissions: {}\njobs: {}\n")
        assert model.global_permissions.mode is PermissionMode.NONE_DECLARED
        assert any(d.code == "EMPTY_PERMISSIONS" for d in model.diagnostics)

    def test_permissions_absent(self):
        model = parse_workflow("on: push\njobs: {}\n")
        assert model.global_permissions is None

    def test_raw_text_round_trips(self):
        text = "on: push\njobs:\n  a:\n    runs-on: ubuntu-latest\n    steps:\n      - run: x\n"
        assert parse_workflow(text).raw_text == text

    def test_triggers_scalar_list_and_map(self):
        assert parse_workflow("on: push\njobs: {}\n").triggers == ("push",)
        assert parse_workflow("on: [push, pull_request]\njobs: {}\n").triggers == (
            "push", "pull_request")
        model = parse_workflow(
            "on:\n  push:\n    branches: [main]\n  schedule:\n    - cron: '0 0 * * *'\njobs: {}\n")
        assert model.triggers == ("push", "schedule")

    def test_runs_on_scalar_normalized_to_list(self):
        model = parse_workflow(
            "on: push\njobs:\n  a:\n    runs-on: ubuntu-latest\n    steps:\n      - run: x\n")
        assert model.jobs["a"].runs_on == ("ubuntu-latest",)

    def test_needs_scalar_and_dangling(self):
        model = parse_workflow(
            "on: push\njobs:\n"
            "  a:\n    runs-on: ubuntu-latest\n    steps: [{run: x}]\n"
            "  b:\n    needs: ghost\n    runs-on: ubuntu-latest\n    steps: [{run: y}]\n")
        assert model.jobs["b"].needs == ("ghost",)
        assert any(d.code == "DANGLING_NEEDS" for d in model.diagnostics)

    def test_step_with_uses_and_run_is_diagnosed(self):
        model = parse_workflow(
            "on: push\njobs:\n  a:\n    runs-on: ubuntu-latest\n"
            f"    steps:\n      - uses: actions/checkout@{SHA}\n        run: echo x\n")
        step = model.jobs["a"].steps[0]
        assert step.uses is not None and step.run is None
        assert sum(1 for d in model.diagnostics if d.code == "STEP_USES_AND_RUN") == 1

    def test_anchors_and_merge_keys_resolved(self):
        text = (
            "on: push\n"
            "defaults_env: &base\n  FOO: bar\n"
            "jobs:\n  a:\n    runs-on: ubuntu-latest\n"
            "    env:\n      <<: *base\n      EXTRA: baz\n"
            "    steps:\n      - run: echo x\n")
        model = parse_workflow(text)
        assert model.jobs["a"].env == {"FOO": "bar", "EXTRA": "baz"}

    def test_duplicate_keys_last_wins_with_diagnostic(self):
        text = ("on: push\njobs:\n  a:\n    runs-on: ubuntu-latest\n"
                "    runs-on: macos-latest\n    steps:\n      - run: x\n")
        model = parse_workflow(text)
        assert model.jobs["a"].runs_on == ("macos-latest",)
        assert any(d.code == "DUPLICATE_KEY" for d in model.diagnostics)

    def test_duplicate_job_ids_diagnosed(self, workflow_fixtures):
        model = parse_workflow(workflow_fixtures["duplicate_job_ids"])
        assert list(model.jobs) == ["build"]
        assert any(d.code == "DUPLICATE_JOB_ID" for d in model.diagnostics)

    def test_jobs_preserve_source_order(self):
        text = "on: push\njobs:\n" + "".join(
            f"  job{i}:\n    runs-on: ubuntu-latest\n    steps: [{{run: x}}]\n"
            for i in ("z", "a", "m"))
        assert list(parse_workflow(text).jobs) == ["jobz", "joba", "jobm"]

    def test_yaml_11_on_key(self):
        # unquoted `on` resolves to boolean True under YAML 1.1
        model = parse_workflow("on: push\njobs: {}\n")
        assert model.triggers == ("push",)

    def test_matrix_parsed(self):
        model = parse_workflow(
            "on: push\njobs:\n  a:\n"
            "    strategy:\n      matrix:\n        os: [ubuntu-latest, macos-latest]\n"
            "        include:\n          - os: windows-latest\n"
            "    runs-on: ${{ matrix.os }}\n    steps: [{run: x}]\n")
        strategy = model.jobs["a"].strategy
        assert strategy.variables == {"os": ("ubuntu-latest", "macos-latest")}
        assert strategy.values_for("os") == ("ubuntu-latest", "macos-latest",
                                             "windows-latest")

    def test_reusable_workflow_job(self):
        model = parse_workflow(
            "on: push\njobs:\n  call:\n    uses: ./.github/workflows/reuse.yml\n")
        job = model.jobs["call"]
        assert job.uses.kind is ActionKind.LOCAL
        assert not job.is_incomplete

    def test_incomplete_job_diagnosed(self):
        model = parse_workflow("on: push\njobs:\n  husk: {}\n")
        assert model.jobs["husk"].is_incomplete
        assert any(d.code == "INCOMPLETE_JOB" for d in model.diagnostics)

    def test_run_script_metrics(self):
        model = parse_workflow(
            "on: push\njobs:\n  a:\n    runs-on: ubuntu-latest\n    steps:\n"
            "      - run: |\n          # setup\n          make build && make test\n"
            "          echo done\n")
        run = model.jobs["a"].steps[0].run
        assert run.line_count == 2  # comment line excluded
        assert run.uses_pipes_or_chaining

    def test_comment_only_run_script_floors_line_count(self):
        model = parse_workflow(
            "on: push\njobs:\n  a:\n    runs-on: ubuntu-latest\n    steps:\n"
            "      - run: '# nothing yet'\n")
        assert model.jobs["a"].steps[0].run.line_count == 1


class TestClassifyActionRef:
    def test_tag_ref(self):
        ref = classify_action_ref("actions/checkout@v4")
        assert ref.kind is ActionKind.REMOTE
        assert ref.ref_kind is RefKind.TAG
        assert (ref.owner, ref.repo) == ("actions", "checkout")

    def test_sha_ref(self):
        ref = classify_action_ref("owner/act@" + "a" * 40)
        assert ref.kind is ActionKind.REMOTE
        assert ref.ref_kind is RefKind.SHA

    def test_uppercase_sha_normalized(self):
        ref = classify_action_ref("owner/act@" + "A" * 40)
        assert ref.ref_kind is RefKind.SHA

    def test_39_hex_is_not_sha(self):
        assert classify_action_ref("owner/act@" + "a" * 39).ref_kind is RefKind.TAG

    def test_local_reusable_workflow(self):
        ref = classify_action_ref("./.github/workflows/reuse.yml")
        assert ref.kind is ActionKind.LOCAL
        assert ref.ref_kind is RefKind.NONE

    def test_docker_ref(self):
        assert classify_action_ref("docker://alpine:3.19").kind is ActionKind.DOCKER

    def test_remote_reusable_workflow(self):
        ref = classify_action_ref(f"octo/templates/.github/workflows/ci.yml@{SHA}")
        assert ref.kind is ActionKind.REUSABLE_WORKFLOW
        assert ref.ref_kind is RefKind.SHA

    def test_branch_ref(self):
        assert classify_action_ref("owner/act@main").ref_kind is RefKind.BRANCH
        assert classify_action_ref("owner/act@refs/heads/dev").ref_kind is RefKind.BRANCH

    @given(st.text(min_size=1, max_size=60))
    def test_pure_and_exhaustive(self, raw):
        first = classify_action_ref(raw)
        second = classify_action_ref(raw)
        assert first == second
        assert first.kind in set(ActionKind)
        assert first.ref_kind in set(RefKind)

    @given(st.text(alphabet="abcdef0123456789", min_size=40, max_size=40))
    def test_sha_iff_40_hex(self, hexref):
        assert classify_action_ref(f"o/r@{hexref}").ref_kind is RefKind.SHA


class TestSecretUsages:
    def test_step_env_usage(self):
        model = parse_workflow(
            "on: push\njobs:\n  a:\n    runs-on: ubuntu-latest\n    steps:\n"
            "      - run: echo x\n        env:\n          TOKEN: ${{ secrets.T }}\n")
        usages = extract_secret_usages(model)
        assert len(usages) == 1
        assert usages[0].scope is SecretScope.STEP_ENV
        assert usages[0].location == "jobs.a.steps[0].env.TOKEN"

    def test_no_secrets_is_empty(self, workflow_fixtures):
        model = parse_workflow(workflow_fixtures["clean_pinned"])
        assert extract_secret_usages(model) == []

    def test_job_env_usage(self, workflow_fixtures):
        model = parse_workflow(workflow_fixtures["secrets_job_scoped"])
        scopes = {u.scope for u in extract_secret_usages(model)}
        assert scopes == {SecretScope.JOB_ENV}

    def test_with_input_and_run_body(self):
        model = parse_workflow(
            "on: push\njobs:\n  a:\n    runs-on: ubuntu-latest\n    steps:\n"
            "      - uses: some/action@" + "b" * 40 + "\n"
            "        with:\n          token: ${{ secrets.GH }}\n"
            "      - run: curl -H \"auth ${{ secrets.GH }}\" example.com\n")
        scopes = sorted(u.scope.value for u in extract_secret_usages(model))
        assert scopes == ["RUN_BODY", "WITH_INPUT"]


# every generated mapping parses to a model or NotAWorkflow, never a crash
_yaml_scalars = st.one_of(st.none(), st.booleans(), st.integers(-99, 99),
                          st.text(max_size=8))
_yaml_values = st.recursive(
    _yaml_scalars,
    lambda children: st.one_of(
        st.lists(children, max_size=3),
        st.dictionaries(st.text(min_size=1, max_size=6), children, max_size=3)),
    max_leaves=12)


@settings(max_examples=150, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=8), _yaml_values, max_size=4))
def test_parsing_total_on_valid_yaml(doc):
    text = yaml.safe_dump(doc, allow_unicode=True)
    try:
        model = parse_workflow(text)
    except NotAWorkflow:
        return
    assert model.raw_text == text
    both = sum(1 for _, step in model.iter_steps()
               if step.uses is not None and step.run is not None)
    assert both == 0


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(
    st.text(alphabet="abcdefgh", min_size=1, max_size=6),
    st.fixed_dictionaries({
        "runs-on": st.sampled_from(["ubuntu-latest", "macos-latest"]),
        "steps": st.lists(
            st.one_of(
                st.fixed_dictionaries({"run": st.text(min_size=1, max_size=20)}),
                st.fixed_dictionaries({"uses": st.text(min_size=1, max_size=20)}),
                st.fixed_dictionaries({"uses": st.text(min_size=1, max_size=20),
                                       "run": st.text(min_size=1, max_size=20)}),
            ), min_size=1, max_size=3),
    }), min_size=1, max_size=3))
def test_both_uses_and_run_diagnostic_count(jobs):
    source = {"on": "push", "jobs": jobs}
    expected = sum(
        1 for job in jobs.values() for step in job["steps"]
        if "uses" in step and "run" in step)
    model = parse_workflow(yaml.safe_dump(source))
    diagnosed = sum(1 for d in model.diagnostics if d.code == "STEP_USES_AND_RUN")
    assert diagnosed == expected


def test_merge_key_override_is_not_a_duplicate():
    text = (
        "on: push\n"
        "base_env: &base\n  FOO: bar\n  SHARED: old\n"
        "jobs:\n  a:\n    runs-on: ubuntu-latest\n"
        "    env:\n      <<: *base\n      SHARED: new\n"
        "    steps:\n      - run: echo x\n")
    model = parse_workflow(text)
    assert model.jobs["a"].env == {"FOO": "bar", "SHARED": "new"}
    assert not any(d.code == "DUPLICATE_KEY" for d in model.diagnostics)
