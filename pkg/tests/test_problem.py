import json

import numpy as np
import pytest

from distlearn.distlearn_core.commands import PROBLEMS_DIR_PATH
from distlearn.distlearn_core.errors import ProblemSpecError
from distlearn.distlearn_core.problem import (
    ArmOutputs,
    ProblemSpec,
    SampleGenerationMatrix,
    build_matrices,
    load_problem_from_file,
    output_probabilities,
    parse_problem_spec,
    serialize_problem_spec,
    validate_distribution,
)


class TestArmOutputs:
    def test_outputs_in_first_appearance_order(self):
        arm = ArmOutputs(0, ["b", "a", "b", "c"])
        assert arm.outputs == ("b", "a", "c")
        assert arm.output_index_of_symbol == (0, 1, 0, 2)
        assert arm.m == 3

    def test_rejects_unhashable_labels(self):
        with pytest.raises(ProblemSpecError):
            ArmOutputs(0, ["a", ["b"]])

    def test_rejects_boolean_labels(self):
        with pytest.raises(ProblemSpecError):
            ArmOutputs(0, [1, True, 0])

    def test_int_and_float_labels_stay_distinct(self):
        arm = ArmOutputs(0, [1, 1.0, 1])
        assert arm.m == 2
        assert arm.output_index_of_symbol == (0, 1, 0)

    def test_json_labels_keep_their_type(self):
        spec = parse_problem_spec(json.dumps({"alphabet_size": 3, "arms": [[1, 1.0, "1"]]}))
        assert build_matrices(spec).m == 3


class TestSampleGenerationMatrix:
    def test_example_one_blocks(self, example_one):
        A = build_matrices(example_one)
        np.testing.assert_array_equal(A.per_arm[0], [[1, 0, 0], [0, 1, 1]])
        np.testing.assert_array_equal(A.per_arm[1], [[1, 0, 1], [0, 1, 0]])
        np.testing.assert_array_equal(A.per_arm[2], [[1, 1, 0], [0, 0, 1]])
        assert A.m == 6 and A.n == 3
        assert A.output_counts == [2, 2, 2]
        np.testing.assert_array_equal(A.row_arm, [0, 0, 1, 1, 2, 2])

    def test_rejects_column_with_two_outputs(self):
        with pytest.raises(ProblemSpecError):
            SampleGenerationMatrix([np.array([[1, 1], [1, 0]])])

    def test_rejects_non_binary(self):
        with pytest.raises(ProblemSpecError):
            SampleGenerationMatrix([np.array([[2, 0], [0, 1]])])

    def test_subset_keeps_original_arm_ids(self, example_one_matrix):
        sub = example_one_matrix.subset([2, 0])
        assert sub.arm_ids == (2, 0)

    def test_output_probabilities_sum_to_one_per_arm(self, example_one_matrix):
        q = output_probabilities(example_one_matrix, [0.2, 0.3, 0.5])
        for k in range(example_one_matrix.num_arms):
            assert q.block(k).sum() == pytest.approx(1.0)
        np.testing.assert_allclose(q.block(0), [0.2, 0.8])

    def test_output_probabilities_dimension_mismatch(self, example_one_matrix):
        with pytest.raises(ProblemSpecError):
            output_probabilities(example_one_matrix, [0.5, 0.5])


class TestDistributionValidation:
    def test_rejects_zero_probability(self):
        with pytest.raises(ProblemSpecError):
            validate_distribution([0.5, 0.5, 0.0], 3)

    def test_rejects_sum_off_by_more_than_tolerance(self):
        with pytest.raises(ProblemSpecError):
            validate_distribution([0.2, 0.3, 0.49], 3)

    def test_renormalises_within_tolerance(self):
        p = validate_distribution([0.2, 0.3, 0.5 + 5e-13], 3)
        assert p.sum() == pytest.approx(1.0, abs=1e-15)

    def test_wrong_length(self):
        with pytest.raises(ProblemSpecError):
            validate_distribution([0.5, 0.5], 3)


class TestProblemSpec:
    def test_defaults_from_config(self):
        spec = ProblemSpec(alphabet_size=2, arms=[[0, 1]])
        assert spec.horizon == 5000 and spec.trials == 200 and spec.master_seed == 0
        assert spec.true_distribution is None

    def test_arm_length_must_match_alphabet(self):
        with pytest.raises(ProblemSpecError, match="Arm 2"):
            ProblemSpec(alphabet_size=3, arms=[["a", "b", "c"], ["a", "b"]])

    @pytest.mark.parametrize("field_name,value", [("horizon", -1), ("trials", 0), ("master_seed", 2**64)])
    def test_settings_bounds(self, field_name, value):
        with pytest.raises(ProblemSpecError):
            ProblemSpec(alphabet_size=2, arms=[[0, 1]], **{field_name: value})

    def test_parse_serialize_parse_is_identity(self, example_one):
        text = serialize_problem_spec(example_one)
        again = parse_problem_spec(text)
        assert again == example_one
        assert serialize_problem_spec(again) == text

    def test_yaml_document_accepted(self):
        spec = parse_problem_spec("alphabet_size: 2\narms:\n  - [a, b]\ndistribution: [0.25, 0.75]\n")
        np.testing.assert_allclose(spec.true_distribution, [0.25, 0.75])

    def test_missing_required_key(self):
        with pytest.raises(ProblemSpecError, match="arms"):
            ProblemSpec.from_dict({"alphabet_size": 3})

    def test_unknown_key(self):
        with pytest.raises(ProblemSpecError, match="colour"):
            ProblemSpec.from_dict({"alphabet_size": 2, "arms": [[0, 1]], "colour": "red"})

    def test_with_distribution_keeps_arms(self, seven_symbol):
        shifted = seven_symbol.with_distribution([0.4, 0.25, 0.2, 0.05, 0.025, 0.025, 0.05])
        assert shifted.arms == seven_symbol.arms
        assert shifted.true_distribution[0] == pytest.approx(0.4)

    def test_with_overrides(self, example_one):
        spec = example_one.with_overrides(horizon=10, trials=3, master_seed=9)
        assert (spec.horizon, spec.trials, spec.master_seed) == (10, 3, 9)
        assert spec.to_dict()["seed"] == 9


class TestLoading:
    def test_bundled_files_parse(self):
        for name in ("example_one", "example_two", "seven_symbol", "seven_symbol_shifted"):
            spec = load_problem_from_file(name, PROBLEMS_DIR_PATH)
            assert spec.name == name
            assert spec.true_distribution is not None

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_problem_from_file("nowhere", str(tmp_path))

    def test_invalid_file_wraps_error(self, tmp_path):
        (tmp_path / "broken.json").write_text(json.dumps({"alphabet_size": 1, "arms": [[0]]}))
        with pytest.raises(ProblemSpecError, match="Failed to load"):
            load_problem_from_file("broken", str(tmp_path))
