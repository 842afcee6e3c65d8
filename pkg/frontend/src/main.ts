import { SessionApi } from './api.js';
import { SessionController } from './session.js';
import { ConsultationView } from './view.js';

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get('service') ?? window.location.origin;

const api = new SessionApi(baseUrl);
const controller = new SessionController(api);
const root = document.getElementById('app');
if (root === null) throw new Error('missing #app element');
new ConsultationView(root, controller);
