import json
import struct

import numpy as np
import pytest

from spo2tl.calibration import QuadCalib
from spo2tl.exceptions import CheckpointError, InvalidConfigError, SessionParseError
from spo2tl.io import (CHECKPOINT_VERSION, MAGIC, ExperimentConfig, checkpoint_bytes,
                       checkpoint_from_bytes, expand_session_paths, format_session, load_checkpoint,
                       load_config, parse_session, read_session, save_checkpoint, session_filename,
                       write_session)
from spo2tl.nn import ModelConfig, ModelParams
from spo2tl.preprocessing import preprocess_session
from spo2tl.segmentation import PpgSession
from spo2tl.synth import SynthConfig, generate_session


@pytest.fixture(scope="module")
def session():
    return generate_session(SynthConfig(duration_s=240.0, seed=9))


class TestSessionFile:
    def test_lossless_round_trip(self, session, tmp_path):
        path = write_session(session, tmp_path / session_filename(session))
        back = read_session(path)
        assert np.array_equal(back.red, session.red) and np.array_equal(back.ir, session.ir)
        assert np.array_equal(back.label_t, session.label_t)
        assert np.array_equal(back.label_spo2, session.label_spo2)
        assert (back.subject_id, back.fs, back.device, back.normalized) == ("S00", 86.0, "synth",
                                                                            False)
        # a second write reproduces the file byte for byte
        assert format_session(back) == path.read_text()

    def test_header(self, session):
        header = json.loads(format_session(session).splitlines()[0][len("#SESSION "):])
        assert header["wavelengths_nm"] == [660, 940]
        assert header["fs"] == 86.0 and header["subject_id"] == "S00"

    def test_normalized_round_trip(self, session):
        out = preprocess_session(session).session
        back = parse_session(format_session(out))
        assert back.normalized and back.fs == 25.0
        assert np.array_equal(back.red, out.red)

    def _lines(self, session):
        short = PpgSession("S00", session.red[:200], session.ir[:200], session.fs,
                           session.label_t[:2], session.label_spo2[:2])
        return format_session(short).splitlines()

    def test_corrupt_row_names_its_line(self, session):
        lines = self._lines(session)
        lines[10] = "0.1,abc,5"
        with pytest.raises(SessionParseError) as exc:
            parse_session("\n".join(lines))
        assert exc.value.line == 11 and "line 11" in str(exc.value)

    def test_wrong_field_count(self, session):
        lines = self._lines(session)
        lines[5] = "1,2"
        with pytest.raises(SessionParseError, match="line 6"):
            parse_session("\n".join(lines))

    def test_timestamps_must_match_fs(self, session):
        lines = self._lines(session)
        t, r, i = lines[20].split(",")
        lines[20] = f"{float(t) + 1e-3!r},{r},{i}"
        with pytest.raises(SessionParseError, match="line 21"):
            parse_session("\n".join(lines))

    @pytest.mark.parametrize("mutate, where", [
        (lambda L: L[1:], "line 1"),
        (lambda L: [L[0].replace("{", "{{")] + L[1:], "line 1"),
        (lambda L: L[:1] + L[2:], "line 2"),
        (lambda L: [x for x in L if x != "#LABELS"], "expected"),
        (lambda L: L + ["stray"], "expected 2 fields"),
        (lambda L: L + ["#EXTRA"], "unexpected"),
    ])
    def test_structural_errors(self, session, mutate, where):
        with pytest.raises(SessionParseError, match=where):
            parse_session("\n".join(mutate(self._lines(session))))

    def test_directory_expansion(self, session, tmp_path):
        write_session(session, tmp_path / "b.session")
        write_session(session, tmp_path / "a.session")
        (tmp_path / "notes.txt").write_text("x")
        assert [p.name for p in expand_session_paths([tmp_path])] == ["a.session", "b.session"]
        with pytest.raises(FileNotFoundError):
            expand_session_paths([tmp_path / "missing"])


class TestCheckpoint:
    @pytest.fixture
    def params(self):
        p = ModelParams.initialize(ModelConfig(hidden=3, seed=4))
        p.buffers["norm.x_scale"] = np.array([0.013, 0.021])
        p.arrays["fc.b"][:] = 95.123456789
        p.set_trainable(attention=False)
        return p

    def test_bitwise_round_trip(self, params, tmp_path):
        calib = QuadCalib(104.0, -17.0, -2.0)
        path = save_checkpoint(tmp_path / "m.ckpt", params, calib)
        back, c = load_checkpoint(path)
        assert c == calib
        assert back.config == params.config and back.trainable == params.trainable
        for n in params.names():
            assert back[n].tobytes() == params[n].tobytes()
        assert back.buffers["norm.x_scale"].tobytes() == params.buffers["norm.x_scale"].tobytes()
        assert checkpoint_bytes(back, c) == path.read_bytes()

    def test_layout(self, params):
        data = checkpoint_bytes(params)
        assert data.startswith(MAGIC)
        version, hlen = struct.unpack_from("<IQ", data, len(MAGIC))
        assert version == CHECKPOINT_VERSION
        header = json.loads(data[len(MAGIC) + 12:len(MAGIC) + 12 + hlen])
        assert header["arrays"][0] == ["l1.fwd.Wi", [2, 3]]
        assert header["calib"] is None
        first = np.frombuffer(data, "<f8", 6, len(MAGIC) + 12 + hlen)
        assert np.array_equal(first.reshape(2, 3), params["l1.fwd.Wi"])

    def test_unknown_version_refused(self, params):
        data = bytearray(checkpoint_bytes(params))
        struct.pack_into("<I", data, len(MAGIC), CHECKPOINT_VERSION + 1)
        with pytest.raises(CheckpointError, match="version"):
            checkpoint_from_bytes(bytes(data))

    @pytest.mark.parametrize("cut", [0, 4, 30, -8])
    def test_corrupt_files(self, params, cut):
        data = checkpoint_bytes(params)
        bad = b"NOTACKPT" + data[8:] if cut == 0 else data[:cut]
        with pytest.raises(CheckpointError):
            checkpoint_from_bytes(bad)

    def test_trailing_bytes(self, params):
        with pytest.raises(CheckpointError, match="trailing"):
            checkpoint_from_bytes(checkpoint_bytes(params) + b"\0" * 8)


class TestExperimentConfig:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(model=ModelConfig(hidden=8), data=["a", "b"]).with_seed(3)
        path = tmp_path / "c.json"
        path.write_text(cfg.to_json())
        back = load_config(path)
        assert back == cfg
        assert back.train.seed == back.model.seed == back.synth.seed == back.split.seed == 3

    def test_partial_config_uses_defaults(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"model": {"hidden": 4}, "train": {"pretrain_epochs": 2}}))
        cfg = load_config(path)
        assert cfg.model.hidden == 4 and cfg.model.layers == 2 and cfg.train.batch == 256

    @pytest.mark.parametrize("text", ['{"nope": 1}', '{"model": {"width": 3}}', "[1, 2]",
                                      '{"split": {"kind": "random"}}', "{bad json"])
    def test_invalid(self, tmp_path, text):
        path = tmp_path / "c.json"
        path.write_text(text)
        with pytest.raises(InvalidConfigError):
            load_config(path)

    def test_missing_paths(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ExperimentConfig(data=[str(tmp_path / "none")]).check_paths()
