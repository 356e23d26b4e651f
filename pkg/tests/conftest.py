"""
Configuración de pytest para las pruebas de TQx
"""
import pytest
import sys
import os
import threading

import numpy as np
from flask import Flask, jsonify, request
from werkzeug.serving import make_server

# Agregar el directorio raíz al path para importar tqx
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tqx.synthetic import generate_synthetic, write_synthetic
from tqx.tensor_core import EmbeddingMatrix
from tqx.woi import build_pool

FAKE_DIM = 4


@pytest.fixture
def sample_records():
    """Registros crudos de keywords de ejemplo"""
    return [
        {'text': 'adenocarcinoma', 'cui': 'C0001418', 'semantic_types': ['Neoplastic Process']},
        {'text': 'inflammation', 'cui': 'C0021368', 'semantic_types': ['Pathologic Function']},
        {'text': 'colitis', 'cui': 'C0009319', 'semantic_types': ['Disease or Syndrome']},
        {'text': 'stroma', 'cui': 'C0038440', 'semantic_types': ['Tissue']},
        {'text': 'Inflammation (finding)', 'cui': 'C0021368', 'semantic_types': ['Finding']},
    ]


@pytest.fixture
def sample_pool(sample_records):
    """Pool Level-0 construido a partir de los registros de ejemplo"""
    return build_pool(sample_records)


@pytest.fixture
def sample_images():
    """Matriz de imágenes pequeña con ids legibles"""
    rng = np.random.default_rng(7)
    return EmbeddingMatrix(ids=[f'img-{i}' for i in range(6)], values=rng.standard_normal((6, 8)))


@pytest.fixture
def synthetic_dataset():
    """Fixture sintético: 3 clusters × 50 imágenes, 12 keywords, dimensión 32"""
    return generate_synthetic(n_clusters=3, images_per_cluster=50, n_keywords=12, dim=32, margin=0.5, seed=0)


@pytest.fixture
def synthetic_dir(tmp_path, synthetic_dataset):
    """Fixture sintético escrito en disco con su config.yaml"""
    config_path = write_synthetic(synthetic_dataset, tmp_path / 'data', run_output=tmp_path / 'run')
    return config_path


def create_fake_provider():
    """Proveedor de embeddings falso: vector determinista por id"""
    app = Flask(__name__)
    app.config['TESTING'] = True
    app.config['CALLS'] = 0
    app.config['OMIT'] = set()
    app.config['FAIL_STATUS'] = None

    @app.route('/embed', methods=['POST'])
    def embed():
        app.config['CALLS'] += 1
        if app.config['FAIL_STATUS']:
            return jsonify({'error': 'falla simulada'}), app.config['FAIL_STATUS']
        payload = request.get_json()
        embeddings = []
        for item in payload['items']:
            if item['id'] in app.config['OMIT']:
                continue
            text = item.get('text') or item.get('image') or ''
            embeddings.append({
                'id': item['id'],
                'values': [float(len(text)), 1.0, float(len(item['id'])), 0.5],
            })
        return jsonify({'dim': FAKE_DIM, 'embeddings': embeddings})

    return app


@pytest.fixture
def fake_provider():
    """Servidor HTTP local con el proveedor falso; entrega (url, app)"""
    app = create_fake_provider()
    server = make_server('127.0.0.1', 0, app, threaded=True)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f'http://127.0.0.1:{server.server_port}/embed'
    yield url, app
    server.shutdown()
    thread.join(timeout=5)
