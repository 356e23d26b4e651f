"""
Pruebas de integración para la línea de comandos
"""
import json

import pytest

from tqx.cli import EXIT_OK, EXIT_VALIDATION, main
from tqx.formats import read_tqxe

FAST = ['--set', 'n_seeds=2', '--set', 'classifier.epochs=10']


@pytest.mark.integration
class TestCli:
    """Pruebas de integración para los subcomandos de tqx"""

    def test_synth_y_run(self, tmp_path, capsys):
        """Probar el flujo synth → run desde la línea de comandos"""
        assert main(['synth', '--output', str(tmp_path / 'data'), '--images-per-cluster', '20']) == EXIT_OK
        config = tmp_path / 'data' / 'config.yaml'
        assert config.exists()

        code = main(['run', '--config', str(config), *FAST, '--output', str(tmp_path / 'out')])

        assert code == EXIT_OK
        assert (tmp_path / 'out' / 'manifest.json').exists()
        assert 'Reportes en' in capsys.readouterr().out

    def test_run_desde_manifiesto_sin_salida(self, synthetic_dir, tmp_path):
        """Probar que repetir un manifiesto exige --output"""
        assert main(['run', '--config', str(synthetic_dir), *FAST, '--set', 'classify=false',
                     '--output', str(tmp_path / 'out')]) == EXIT_OK

        assert main(['run', '--config', str(tmp_path / 'out' / 'manifest.json')]) == EXIT_VALIDATION

    def test_etiquetas_inexistentes(self, synthetic_dir, tmp_path, capsys):
        """Probar código 2 y ninguna salida cuando falta el archivo de etiquetas"""
        code = main(['run', '--config', str(synthetic_dir), '--set', f'paths.labels={tmp_path / "nope.csv"}',
                     '--output', str(tmp_path / 'out')])

        assert code == EXIT_VALIDATION
        assert not (tmp_path / 'out').exists()
        assert 'nope.csv' in capsys.readouterr().err

    @pytest.mark.parametrize('override', [
        'n_seeds=abc',
        'retrieval.m=0',
        'retrieval.temperature=-1',
        'clustering.max_iter=0',
        'workers=0',
    ])
    def test_configuracion_invalida(self, synthetic_dir, tmp_path, capsys, override):
        """Probar código 2 antes de cualquier etapa con valores de configuración inválidos"""
        code = main(['run', '--config', str(synthetic_dir), '--set', override, '--output', str(tmp_path / 'out')])

        assert code == EXIT_VALIDATION
        assert not (tmp_path / 'out').exists()
        err = capsys.readouterr().err
        assert 'Error de validación' in err
        assert override.split('=')[0] in err

    def test_pool(self, tmp_path, sample_records):
        """Probar construcción y filtrado de pools"""
        records = tmp_path / 'records.jsonl'
        records.write_text('\n'.join(json.dumps(r) for r in sample_records) + '\n', encoding='utf-8')

        assert main(['pool', '--records', str(records), '--output', str(tmp_path / 'levels'), '--all-levels']) == EXIT_OK
        assert (tmp_path / 'levels' / 'level-3.jsonl').exists()
        assert main(['pool', '--records', str(records), '--output', str(tmp_path / 'p.jsonl'),
                     '--types', 'Nonexistent Type']) == EXIT_VALIDATION
        assert not (tmp_path / 'p.jsonl').exists()

    def test_quantify(self, synthetic_dir, tmp_path):
        """Probar que quantify escribe selección, embeddings y pesos"""
        out = tmp_path / 'q'

        assert main(['quantify', '--config', str(synthetic_dir), '--m', '4', '--output', str(out)]) == EXIT_OK
        weights = read_tqxe(out / 'text-level-0' / 'weights.tqxe')
        assert weights.dim == 4
        assert read_tqxe(out / 'text-level-0' / 'text_embeddings.tqxe').dim == 32

    def test_cluster_y_classify(self, synthetic_dir, tmp_path):
        """Probar cluster y classify sobre una matriz de embeddings"""
        data = synthetic_dir.parent
        images, labels = str(data / 'images.tqxe'), str(data / 'labels.csv')

        assert main(['cluster', '--embeddings', images, '--labels', labels, '--output', str(tmp_path / 'c')]) == EXIT_OK
        assert (tmp_path / 'c' / 'embeddings' / 'cluster_report.json').exists()
        assert main(['classify', '--embeddings', images, '--labels', labels, '--n-seeds', '1', '--epochs', '5',
                     '--output', str(tmp_path / 'k')]) == EXIT_OK
        assert (tmp_path / 'k' / 'embeddings' / 'classification.json').exists()

    def test_cluster_con_k_invalido(self, synthetic_dir, tmp_path):
        """Probar código 2 con k mayor que la cantidad de imágenes"""
        images = str(synthetic_dir.parent / 'images.tqxe')

        assert main(['cluster', '--embeddings', images, '--k', '1000', '--output', str(tmp_path / 'c')]) == EXIT_VALIDATION

    def test_fetch(self, fake_provider, tmp_path, monkeypatch):
        """Probar fetch contra el proveedor local y el caché"""
        monkeypatch.setenv('NO_PROXY', '127.0.0.1,localhost')
        monkeypatch.setenv('no_proxy', '127.0.0.1,localhost')
        url, app = fake_provider
        items = tmp_path / 'items.jsonl'
        items.write_text('{"id": "C1", "text": "adenoma"}\n{"id": "C2", "text": "stroma"}\n', encoding='utf-8')
        args = ['fetch', '--endpoint', url, '--items', str(items), '--output', str(tmp_path / 'k.tqxe'),
                '--cache-dir', str(tmp_path / 'cache')]

        assert main(args) == EXIT_OK
        assert main(args) == EXIT_OK
        assert app.config['CALLS'] == 1
        assert read_tqxe(tmp_path / 'k.tqxe').ids == ('C1', 'C2')
