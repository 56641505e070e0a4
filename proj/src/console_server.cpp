#include "ppd/console_server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <csignal>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "ppd/error.hpp"
#include "ppd/image_io.hpp"
#include "ppd/sim_world.hpp"
#include "ppd/wire.hpp"

#ifndef PPD_VERSION
#define PPD_VERSION "0.0.0"
#endif

namespace ppd::serve {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string version() { return PPD_VERSION; }

std::string version_json() {
    json j;
    j["name"] = "ppd";
    j["version"] = version();
    j["protocol"] = 1;
    return j.dump();
}

namespace {

// Outgoing frames beyond this are dropped for slow clients; control text is never dropped.
constexpr std::size_t kMaxQueuedFrames = 4;

std::string mime_type(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".html" || ext == ".htm") return "text/html";
    if (ext == ".js" || ext == ".mjs") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".wasm") return "application/wasm";
    return "application/octet-stream";
}

}  // namespace

class WsSession;

struct ConsoleServer::Impl {
    ServeOptions opts;
    ConsoleServer* owner = nullptr;
    net::io_context ioc{1};
    tcp::acceptor acceptor{ioc};
    net::steady_timer tick{ioc};
    net::signal_set signals{ioc};
    bool stopping = false;

    std::unique_ptr<loop::Simulation> sim;
    loop::Mode mode = loop::Mode::kTeleopPP;
    int lap = 0;
    std::vector<loop::LapResult> laps;
    std::vector<loop::LapLogs> logs;
    loop::TimingStats timing;
    json marks = json::array();
    sim::CameraModel cam;

    std::vector<std::weak_ptr<WsSession>> sessions;
    int next_id = 1;
    int driver_id = 0;
    bool driver_seen = false;
    std::optional<Clock::time_point> last_cmd;
    Clock::time_point wall0;
    double sim0 = 0.0;
    std::size_t frames_out = 0;
    std::size_t rejected = 0;

    void new_lap();
    void archive_lap();
    void on_display(const loop::DisplayEvent& ev);
    void on_tick();
    void schedule_tick();
    void do_accept();
    void shutdown();

    void join(const std::shared_ptr<WsSession>& s);
    void leave(int id);
    void on_text(WsSession& s, const std::string& text);
    void on_binary(WsSession& s, const std::string& bytes);
    void broadcast(std::shared_ptr<const std::string> data, bool binary);
    json status() const;
    http::response<http::string_body> handle_http(const http::request<http::string_body>& req) const;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, ConsoleServer::Impl& srv) : ws_(std::move(socket)), srv_(srv) {}

    void run(http::request<http::string_body> req) {
        beast::get_lowest_layer(ws_).expires_never();
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

    void send(std::shared_ptr<const std::string> data, bool binary) {
        if (closed_) return;
        if (binary) {
            std::size_t frames = 0;
            for (const auto& q : queue_) frames += q.second ? 1 : 0;
            if (frames >= kMaxQueuedFrames) return;
        }
        queue_.emplace_back(std::move(data), binary);
        if (queue_.size() == 1) do_write();
    }

    void send_json(const json& j) { send(std::make_shared<const std::string>(j.dump()), false); }

    void close() {
        if (closed_) return;
        closed_ = true;
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().close(ec);
    }

    int id = 0;
    bool driver = false;

private:
    websocket::stream<beast::tcp_stream> ws_;
    ConsoleServer::Impl& srv_;
    beast::flat_buffer buf_;
    std::deque<std::pair<std::shared_ptr<const std::string>, bool>> queue_;
    bool closed_ = false;

    void on_accept(beast::error_code ec) {
        if (ec) return;
        srv_.join(shared_from_this());
        do_read();
    }

    void do_read() { ws_.async_read(buf_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            closed_ = true;
            srv_.leave(id);
            return;
        }
        const std::string data = beast::buffers_to_string(buf_.data());
        buf_.consume(buf_.size());
        if (ws_.got_text()) {
            srv_.on_text(*this, data);
        } else {
            srv_.on_binary(*this, data);
        }
        do_read();
    }

    void do_write() {
        ws_.binary(queue_.front().second);
        ws_.async_write(net::buffer(*queue_.front().first),
                        beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        if (ec) {
            queue_.clear();
            return;
        }
        queue_.pop_front();
        if (!queue_.empty() && !closed_) do_write();
    }
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket&& socket, ConsoleServer::Impl& srv) : stream_(std::move(socket)), srv_(srv) {}

    void run() { do_read(); }

private:
    beast::tcp_stream stream_;
    ConsoleServer::Impl& srv_;
    beast::flat_buffer buf_;
    http::request<http::string_body> req_;

    void do_read() {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buf_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        if (websocket::is_upgrade(req_) && req_.target() == "/ws") {
            std::make_shared<WsSession>(stream_.release_socket(), srv_)->run(std::move(req_));
            return;
        }
        auto res = std::make_shared<http::response<http::string_body>>(srv_.handle_http(req_));
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec2, std::size_t) {
            if (!ec2 && res->keep_alive()) {
                self->do_read();
            } else {
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec2);
            }
        });
    }
};

void ConsoleServer::Impl::new_lap() {
    auto cfg = opts.cfg;
    cfg.mode = mode;
    sim = std::make_unique<loop::Simulation>(cfg, cfg.seed * 1000 + static_cast<std::uint64_t>(lap));
    sim->on_display([this](const loop::DisplayEvent& ev) { on_display(ev); });
    if (driver_seen) sim->set_uplink_paused(true);
    wall0 = Clock::now();
    sim0 = 0.0;
}

void ConsoleServer::Impl::archive_lap() {
    if (!sim) return;
    laps.push_back(sim->summarize(lap));
    logs.push_back(sim->logs());
    timing = sim->timing();
    ++lap;
}

void ConsoleServer::Impl::on_display(const loop::DisplayEvent& ev) {
    if (sessions.empty()) return;
    wire::FrameMsg m;
    m.seq = ev.record->seq;
    m.t0_us = static_cast<std::uint64_t>(wire::to_micros(ev.record->t0));
    m.speed = static_cast<float>(sim->plant().speed);
    m.fov_h = static_cast<float>(cam.fov_h);
    m.fov_v = static_cast<float>(cam.vertical_fov());
    m.pitch = static_cast<float>(opts.cfg.geom.cam_pitch);
    if (ev.image) m.rgb_payload = io::encode_rgb(*ev.image, io::Container::kJpeg, opts.jpeg_quality);
    const auto bytes = wire::encode_frame(m);
    broadcast(std::make_shared<const std::string>(bytes.begin(), bytes.end()), true);

    json hud;
    hud["type"] = "frame";
    hud["seq"] = ev.record->seq;
    hud["t"] = ev.t;
    hud["latency_ms"] = (ev.t - ev.record->t0) * 1e3;
    hud["p95_ms"] = ev.record->p95 * 1e3;
    hud["speed"] = sim->plant().speed;
    hud["steer"] = sim->applied_steer();
    hud["mode"] = loop::mode_name(sim->mode());
    hud["passthrough"] = ev.passthrough;
    hud["estop"] = sim->estop();
    broadcast(std::make_shared<const std::string>(hud.dump()), false);
    ++frames_out;
}

void ConsoleServer::Impl::on_tick() {
    if (stopping) return;
    const auto now = Clock::now();
    if (driver_id != 0) {
        const bool fresh =
            last_cmd && std::chrono::duration<double>(now - *last_cmd).count() <= opts.driver_timeout;
        sim->set_uplink_paused(!fresh);
    }
    const double target = sim0 + opts.pace * std::chrono::duration<double>(now - wall0).count();
    // Falling more than 100 ms behind: rebase instead of running in bursts.
    if (target - sim->time() > 0.1) {
        wall0 = now;
        sim0 = sim->time();
    }
    while (sim->time() < target && !sim->finished()) sim->step();
    owner->sim_time_.store(sim->time());
    if (sim->finished()) {
        json j{{"type", "lap_complete"}, {"lap", lap}};
        broadcast(std::make_shared<const std::string>(j.dump()), false);
        archive_lap();
        new_lap();
    }
    schedule_tick();
}

void ConsoleServer::Impl::schedule_tick() {
    tick.expires_after(std::chrono::milliseconds(2));
    tick.async_wait([this](beast::error_code ec) {
        if (!ec) on_tick();
    });
}

void ConsoleServer::Impl::do_accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
        if (ec) return;  // acceptor closed
        std::make_shared<HttpSession>(std::move(socket), *this)->run();
        do_accept();
    });
}

void ConsoleServer::Impl::shutdown() {
    if (stopping) return;
    stopping = true;
    beast::error_code ec;
    acceptor.close(ec);
    tick.cancel();
    signals.cancel();
    for (auto& w : sessions) {
        if (auto s = w.lock()) s->close();
    }
    ioc.stop();
}

void ConsoleServer::Impl::join(const std::shared_ptr<WsSession>& s) {
    s->id = next_id++;
    if (driver_id == 0) {
        driver_id = s->id;
        s->driver = true;
        driver_seen = true;
        last_cmd.reset();
        sim->set_uplink_paused(true);
    }
    sessions.push_back(s);
    json hello;
    hello["type"] = "hello";
    hello["id"] = s->id;
    hello["role"] = s->driver ? "driver" : "observer";
    hello["version"] = version();
    hello["mode"] = loop::mode_name(sim->mode());
    hello["width"] = cam.width;
    hello["height"] = cam.height;
    s->send_json(hello);
}

void ConsoleServer::Impl::leave(int id) {
    std::erase_if(sessions, [id](const std::weak_ptr<WsSession>& w) {
        auto s = w.lock();
        return !s || s->id == id;
    });
    if (id == driver_id) {
        // Simulation keeps running; the silent uplink lets the watchdog stop the vehicle.
        driver_id = 0;
        sim->set_external_steer(std::nullopt);
        sim->set_uplink_paused(true);
    }
}

void ConsoleServer::Impl::on_text(WsSession& s, const std::string& text) {
    json reply;
    try {
        const auto j = json::parse(text);
        const std::string type = j.value("type", "");
        if (type == "ping") {
            reply = {{"type", "pong"}, {"version", version()}, {"t", sim->time()}};
        } else if (type == "status") {
            reply = status();
        } else if (!s.driver) {
            reply = {{"type", "error"}, {"error", "read-only observer"}, {"of", type}};
        } else if (type == "mode") {
            loop::Mode m;
            if (j.contains("pp")) {
                m = j["pp"].get<bool>() ? loop::Mode::kTeleopPP : loop::Mode::kTeleopNoPP;
            } else {
                m = loop::parse_mode(j.at("mode").get<std::string>());
            }
            sim->set_mode(m);
            mode = m;
            json b{{"type", "mode"}, {"mode", loop::mode_name(m)}, {"t", sim->time()}};
            broadcast(std::make_shared<const std::string>(b.dump()), false);
            return;
        } else if (type == "reset") {
            archive_lap();
            new_lap();
            json b{{"type", "reset"}, {"lap", lap}};
            broadcast(std::make_shared<const std::string>(b.dump()), false);
            return;
        } else if (type == "lap_mark") {
            json mark{{"lap", lap}, {"t", sim->time()}, {"label", j.value("label", "")}};
            marks.push_back(mark);
            reply = {{"type", "ack"}, {"of", "lap_mark"}, {"t", sim->time()}};
        } else {
            reply = {{"type", "error"}, {"error", "unknown message type"}, {"of", type}};
        }
    } catch (const std::exception& e) {
        reply = {{"type", "error"}, {"error", e.what()}};
    }
    s.send_json(reply);
}

void ConsoleServer::Impl::on_binary(WsSession& s, const std::string& bytes) {
    if (!s.driver) {
        ++rejected;
        s.send_json({{"type", "error"}, {"error", "read-only observer"}, {"of", "command"}});
        return;
    }
    try {
        const auto cmd = wire::decode_command(
            std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
        // Station timestamps and delay estimates are attached by the station itself.
        sim->set_external_steer(cmd.steer);
        last_cmd = Clock::now();
        sim->set_uplink_paused(false);
    } catch (const std::exception& e) {
        ++rejected;
        s.send_json({{"type", "error"}, {"error", e.what()}, {"of", "command"}});
    }
}

void ConsoleServer::Impl::broadcast(std::shared_ptr<const std::string> data, bool binary) {
    for (auto& w : sessions) {
        if (auto s = w.lock()) s->send(data, binary);
    }
}

json ConsoleServer::Impl::status() const {
    json j;
    j["type"] = "status";
    j["t"] = sim->time();
    j["lap"] = lap;
    j["mode"] = loop::mode_name(sim->mode());
    j["speed"] = sim->plant().speed;
    j["estop"] = sim->estop();
    j["uplink_paused"] = sim->uplink_paused();
    j["clients"] = sessions.size();
    j["driver"] = driver_id;
    j["frames_out"] = frames_out;
    j["rejected"] = rejected;
    return j;
}

http::response<http::string_body> ConsoleServer::Impl::handle_http(const http::request<http::string_body>& req) const {
    auto reply = [&req](http::status st, std::string body, const std::string& type) {
        http::response<http::string_body> res{st, req.version()};
        res.set(http::field::server, "ppd/" + version());
        res.set(http::field::content_type, type);
        res.keep_alive(req.keep_alive());
        res.body() = req.method() == http::verb::head ? std::string{} : std::move(body);
        res.prepare_payload();
        return res;
    };
    if (req.method() != http::verb::get && req.method() != http::verb::head) {
        return reply(http::status::method_not_allowed, "method not allowed\n", "text/plain");
    }
    const std::string target(req.target());
    if (target == "/health") return reply(http::status::ok, version_json(), "application/json");
    if (target == "/status") return reply(http::status::ok, status().dump(), "application/json");
    if (opts.static_dir.empty() || target.empty() || target[0] != '/' || target.find("..") != std::string::npos) {
        return reply(http::status::not_found, "not found\n", "text/plain");
    }
    std::string rel = target.substr(1, target.find('?') == std::string::npos ? std::string::npos : target.find('?') - 1);
    if (rel.empty() || rel.back() == '/') rel += "index.html";
    const auto path = std::filesystem::path(opts.static_dir) / rel;
    std::ifstream in(path, std::ios::binary);
    if (!in || std::filesystem::is_directory(path)) return reply(http::status::not_found, "not found\n", "text/plain");
    std::ostringstream ss;
    ss << in.rdbuf();
    return reply(http::status::ok, ss.str(), mime_type(path));
}

ConsoleServer::ConsoleServer(ServeOptions opts) : impl_(std::make_unique<Impl>()) {
    opts.cfg.validate();
    if (!(opts.pace > 0.0)) throw InvalidInput("serve: pace must be positive");
    impl_->opts = std::move(opts);
    impl_->owner = this;
    impl_->mode = impl_->opts.cfg.mode;
    impl_->cam.width = impl_->opts.cfg.render_width;
    impl_->cam.height = impl_->opts.cfg.render_height;
}

ConsoleServer::~ConsoleServer() = default;

unsigned short ConsoleServer::start() {
    auto& im = *impl_;
    try {
        const tcp::endpoint ep{net::ip::make_address(im.opts.host), im.opts.port};
        im.acceptor.open(ep.protocol());
        im.acceptor.set_option(net::socket_base::reuse_address(true));
        im.acceptor.bind(ep);
        im.acceptor.listen(net::socket_base::max_listen_connections);
    } catch (const boost::system::system_error& e) {
        throw InvalidInput("serve: cannot listen on " + im.opts.host + ":" + std::to_string(im.opts.port) + ": " +
                           e.code().message());
    }
    im.new_lap();
    return im.acceptor.local_endpoint().port();
}

void ConsoleServer::run() {
    auto& im = *impl_;
    if (!im.acceptor.is_open()) start();
    if (im.opts.handle_signals) {
        im.signals.add(SIGINT);
        im.signals.add(SIGTERM);
        im.signals.async_wait([&im](beast::error_code ec, int) {
            if (!ec) im.shutdown();
        });
    }
    im.do_accept();
    im.wall0 = Clock::now();
    im.schedule_tick();
    im.ioc.run();
    im.archive_lap();
    if (!im.opts.out_dir.empty()) {
        loop::ExperimentResult r;
        r.config = im.opts.cfg;
        r.laps = im.laps;
        r.logs = im.logs;
        r.timing = im.timing;
        r.write(im.opts.out_dir);
        std::ofstream marks(std::filesystem::path(im.opts.out_dir) / "lap_marks.json");
        marks << im.marks.dump(2) << '\n';
    }
}

void ConsoleServer::stop() {
    net::post(impl_->ioc, [im = impl_.get()] { im->shutdown(); });
}

}  // namespace ppd::serve
