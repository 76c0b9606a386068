import json

import numpy as np
import pytest

from src.application.dataset_service import synthesize_scan
from src.application.nn.network import build_network
from src.application.preprocessing import assemble_input
from src.core.exceptions import FormatError, NoBasisError, StorageError, VersionError
from src.domain.models import AcquisitionKind, Split
from src.domain.phantoms import PhantomEntry, PhantomManifest, default_phantom_series
from src.domain.results import EpochRecord, TrainingHistory
from src.infrastructure.storage.archive import PREAMBLE, ArchiveCodec
from src.infrastructure.storage.basis_store import BasisStore
from src.infrastructure.storage.checkpoint_store import CheckpointStore
from src.infrastructure.storage.dataset_store import DatasetStore
from src.infrastructure.storage.report_store import (
    artifact_path,
    phantom_dataset,
    save_phantom_manifest,
)
from src.infrastructure.storage.scan_store import ScanStore

MIXTURE = {"NAA": 0.4, "Cr": 0.3, "GABA": 0.1, "Glu": 0.1, "Gln": 0.1}


class TestArchiveCodec:
    def test_complex_and_real_arrays(self, rng):
        codec = ArchiveCodec(b"TESTARC1")
        arrays = {
            "c": rng.standard_normal(6) + 1j * rng.standard_normal(6),
            "r": rng.standard_normal((2, 3)),
        }
        version, header, decoded = codec.decode(codec.encode({"k": 1}, arrays))
        assert version == 1
        assert header["k"] == 1
        np.testing.assert_array_equal(decoded["c"], arrays["c"])
        np.testing.assert_array_equal(decoded["r"], arrays["r"])

    def test_encoding_is_deterministic(self):
        codec = ArchiveCodec(b"TESTARC1")
        arrays = {"x": np.arange(4.0)}
        assert codec.encode({"b": 2, "a": 1}, arrays) == codec.encode({"a": 1, "b": 2}, arrays)

    def test_wrong_magic(self):
        data = ArchiveCodec(b"TESTARC1").encode({}, {"x": np.zeros(2)})
        with pytest.raises(FormatError) as exc:
            ArchiveCodec(b"OTHERARC").decode(data)
        assert exc.value.offset == 0

    def test_truncated_preamble(self):
        with pytest.raises(FormatError):
            ArchiveCodec(b"TESTARC1").decode(b"TEST")

    def test_truncated_blob(self):
        codec = ArchiveCodec(b"TESTARC1")
        data = codec.encode({}, {"x": np.arange(8.0)})
        with pytest.raises(FormatError):
            codec.decode(data[:-5])

    def test_corrupted_blob(self):
        codec = ArchiveCodec(b"TESTARC1")
        data = bytearray(codec.encode({}, {"x": np.arange(8.0)}))
        data[-1] ^= 0xFF
        with pytest.raises(FormatError) as exc:
            codec.decode(bytes(data))
        assert "checksum" in exc.value.message

    def test_bad_header_json(self):
        header = b"{not json"
        data = PREAMBLE.pack(b"TESTARC1", 1, len(header)) + header
        with pytest.raises(FormatError) as exc:
            ArchiveCodec(b"TESTARC1").decode(data)
        assert exc.value.offset >= PREAMBLE.size

    def test_newer_version(self):
        data = ArchiveCodec(b"TESTARC1", version=2).encode({}, {"x": np.zeros(1)})
        with pytest.raises(VersionError):
            ArchiveCodec(b"TESTARC1", version=1).decode(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError):
            ArchiveCodec(b"TESTARC1").read(tmp_path / "absent.bin")


class TestBasisStore:
    def test_round_trip(self, basis, tmp_path):
        store = BasisStore()
        path = store.save(basis, tmp_path / store.file_name(basis))
        loaded = store.load(path)
        assert loaded.metabolites == basis.metabolites
        assert loaded.linewidth_hz == basis.linewidth_hz
        assert loaded.window == basis.window
        assert loaded.synthesis == basis.synthesis
        for name, spectra in basis.entries.items():
            for acq, spectrum in spectra.items():
                np.testing.assert_array_equal(loaded.entries[name][acq].values, spectrum.values)
        for name, fids in basis.fids.items():
            for acq, fid in fids.items():
                np.testing.assert_array_equal(loaded.fids[name][acq], fid)

    def test_names_with_slashes(self, basis, tmp_path):
        renamed = {name: ("Glu/Gln" if name == "Glu" else name) for name in basis.entries}
        combined = basis.model_copy(
            update={
                "entries": {renamed[n]: s for n, s in basis.entries.items()},
                "fids": {renamed[n]: f for n, f in basis.fids.items()},
            }
        )
        store = BasisStore()
        loaded = store.load(store.save(combined, tmp_path / "combined.mrsb"))
        assert loaded.metabolites == combined.metabolites
        assert "Glu/Gln" in loaded.fids
        for acq, fid in combined.fids["Glu/Gln"].items():
            np.testing.assert_array_equal(loaded.fids["Glu/Gln"][acq], fid)

    def test_inconsistent_header_reports_offset(self, basis, tmp_path):
        store = BasisStore()
        path = store.save(basis, tmp_path / "basis.mrsb")
        _, header, arrays = store.codec.read(path)
        header["linewidth_hz"] = -1.0
        store.codec.write(path, header, arrays)
        with pytest.raises(FormatError) as exc:
            store.load(path)
        assert exc.value.offset == PREAMBLE.size

    def test_load_all_from_directory(self, basis, tmp_path):
        store = BasisStore()
        store.save_all([basis], tmp_path)
        assert [b.linewidth_hz for b in store.load_all(tmp_path)] == [basis.linewidth_hz]

    def test_empty_directory(self, tmp_path):
        with pytest.raises(NoBasisError):
            BasisStore().load_all(tmp_path)

    def test_rejects_other_archive_kinds(self, train_set, tmp_path):
        path = DatasetStore().save(train_set, tmp_path / "train.mrsd")
        with pytest.raises(FormatError):
            BasisStore().load(path)


class TestDatasetStore:
    def test_round_trip(self, train_set, tmp_path):
        store = DatasetStore()
        loaded = store.load(store.save(train_set, tmp_path / "train.mrsd"))
        assert len(loaded) == len(train_set)
        assert loaded.seed == train_set.seed
        assert loaded.split == Split.TRAIN
        np.testing.assert_array_equal(loaded.labels(), train_set.labels())
        for a, b in zip(loaded.samples, train_set.samples):
            assert a.noise_sigma == b.noise_sigma
            for acq in b.spectra:
                np.testing.assert_array_equal(a.spectra[acq].values, b.spectra[acq].values)

    def test_byte_identical(self, train_set, tmp_path):
        store = DatasetStore()
        first = store.save(train_set, tmp_path / "a.mrsd").read_bytes()
        second = store.save(train_set, tmp_path / "b.mrsd").read_bytes()
        assert first == second

    def test_truncated_file(self, train_set, tmp_path):
        path = DatasetStore().save(train_set, tmp_path / "train.mrsd")
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(FormatError):
            DatasetStore().load(path)

    def test_header_sample_count_mismatch(self, train_set, tmp_path):
        store = DatasetStore()
        path = store.save(train_set, tmp_path / "train.mrsd")
        _, header, arrays = store.codec.read(path)
        header["samples"] = header["samples"][:-3]
        store.codec.write(path, header, arrays)
        with pytest.raises(FormatError) as exc:
            store.load(path)
        assert exc.value.offset == PREAMBLE.size
        assert f"lists {len(train_set) - 3} samples" in exc.value.message

    def test_rejects_scans(self, basis, tmp_path):
        from src.domain.spectra import Dataset

        scan = synthesize_scan(basis, MIXTURE)
        dataset = Dataset(samples=[scan], basis_tag="scan", seed=0)
        with pytest.raises(StorageError):
            DatasetStore().save(dataset, tmp_path / "scan.mrsd")


class TestScanStore:
    def test_round_trip(self, basis, tmp_path):
        scan = synthesize_scan(basis, MIXTURE, noise_sigma=0.01, rng_seed=5)
        store = ScanStore()
        loaded = store.load(store.save_sample(scan, tmp_path / "scan.mrsscan"))
        assert set(loaded.time_signals) == set(scan.time_signals)
        for acq, signal in scan.time_signals.items():
            np.testing.assert_array_equal(loaded.time_signals[acq].samples, signal.samples)
            assert loaded.time_signals[acq].bandwidth_hz == signal.bandwidth_hz
        assert loaded.label == pytest.approx(scan.label)

    def test_sample_count_mismatch(self, tmp_path):
        header = {
            "bandwidth_hz": 2000.0,
            "reference_frequency_mhz": 123.0,
            "carrier_ppm": 4.7,
            "samples": 16,
            "acquisitions": ["off"],
            "label": {},
        }
        path = ScanStore().codec.write(
            tmp_path / "bad.mrsscan", header, {"signal/off": np.zeros(8, dtype=complex)}
        )
        with pytest.raises(FormatError) as exc:
            ScanStore().load(path)
        assert "header declares 16" in exc.value.message

    def test_mismatched_acquisitions(self, basis, tmp_path):
        scan = synthesize_scan(basis, MIXTURE)
        signals = dict(scan.time_signals)
        off = signals[AcquisitionKind.EDIT_OFF]
        signals[AcquisitionKind.EDIT_OFF] = off.with_samples(off.samples[:100])
        with pytest.raises(StorageError):
            ScanStore().save(signals, tmp_path / "bad.mrsscan")


class TestCheckpointStore:
    def test_round_trip_predicts_identically(self, tiny_net, train_set, input_cfg, tmp_path):
        history = TrainingHistory(
            epochs=[EpochRecord(epoch=1, train_loss=0.1, val_loss=0.2, val_error=0.05)],
            best_epoch=1,
        )
        store = CheckpointStore()
        path = store.save(tiny_net, tmp_path / "net.mrsn", history)
        loaded, loaded_history = store.load_with_history(path)
        x = assemble_input(train_set.samples[0], input_cfg)
        assert loaded.predict(x) == tiny_net.predict(x)
        assert loaded_history == history
        assert loaded.input_config == tiny_net.input_config
        for key, value in tiny_net.state_dict().items():
            np.testing.assert_array_equal(loaded.state_dict()[key], value)

    def test_layer_mismatch(self, tiny_config, input_cfg, tmp_path):
        net = build_network(tiny_config, seed=1, input_config=input_cfg)
        store = CheckpointStore()
        path = store.save(net, tmp_path / "net.mrsn")
        _, header, arrays = store.codec.read(path)
        header["layers"] = header["layers"][:-1]
        store.codec.write(path, {k: v for k, v in header.items() if k != "arrays"}, arrays)
        with pytest.raises(FormatError):
            store.load(path)


class TestPhantoms:
    def test_default_series(self):
        series = {m.series: m for m in default_phantom_series()}
        assert sorted(series) == ["E1", "E3", "E4"]
        assert len(series["E1"].entries) == 13
        assert len(series["E3"].entries) == 15
        assert len(series["E4"].entries) == 6
        assert series["E1"].entries[-1].concentrations_mm["Cr"] == 8.0

    def test_relative_composition(self):
        entry = PhantomEntry(path="x.mrsscan", concentrations_mm={"NAA": 15.0, "GABA": 5.0})
        rel = entry.relative(("NAA", "Cr", "GABA", "Glu", "Gln"))
        assert rel["NAA"] == pytest.approx(0.75)
        assert rel["Cr"] == 0.0

    def test_phantom_dataset(self, basis, tmp_path):
        scans = ScanStore()
        scans.save_sample(synthesize_scan(basis, MIXTURE), tmp_path / "scans" / "p1.mrsscan")
        manifest = PhantomManifest(
            series="E9",
            entries=[
                PhantomEntry(
                    path="scans/p1.mrsscan",
                    concentrations_mm={"NAA": 8.0, "Cr": 6.0, "GABA": 2.0, "Glu": 2.0, "Gln": 2.0},
                )
            ],
        )
        path = save_phantom_manifest(manifest, tmp_path / "e9.json")
        dataset = phantom_dataset(path, window=basis.window)
        assert len(dataset) == 1
        assert dataset.split == Split.TEST
        assert dataset.samples[0].label["NAA"] == pytest.approx(0.4)

    def test_invalid_manifest(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"series": "E1", "entries": []}))
        with pytest.raises(FormatError):
            phantom_dataset(path)


def test_artifact_path(tmp_path):
    assert artifact_path(tmp_path / "model.mrsn", ".manifest.json") == tmp_path / "model.manifest.json"


def test_corrupted_checkpoint_weights(tiny_net, tmp_path):
    store = CheckpointStore()
    path = store.save(tiny_net, tmp_path / "net.mrsn")
    data = bytearray(path.read_bytes())
    data[-3] ^= 0x10
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        store.load(path)
