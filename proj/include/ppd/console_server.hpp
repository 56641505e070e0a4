#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "ppd/teleop_loop.hpp"

namespace ppd::serve {

/// Version string baked in at build time.
std::string version();
/// `{"name":"ppd","version":...,"protocol":1}`
std::string version_json();

struct ServeOptions {
    std::string host = "127.0.0.1";
    unsigned short port = 8080;  ///< 0 picks a free port
    std::string static_dir;      ///< served under / when set
    std::string out_dir;         ///< final report on shutdown; empty = none
    loop::ExperimentConfig cfg;
    double pace = 1.0;              ///< simulated seconds per wall second
    int jpeg_quality = 70;
    double driver_timeout = 0.2;    ///< s without CommandMsg before the uplink pauses
    bool handle_signals = false;    ///< stop on SIGINT / SIGTERM
};

/// Live service for the operator console. One simulation runs at wall-clock
/// pace on the I/O thread. Endpoints:
///   GET /health   version JSON
///   GET /status   simulation state JSON
///   GET /ws       websocket: binary FrameMsg down, CommandMsg up, JSON
///                 text control frames both ways
///   GET /*        files under static_dir
/// The first websocket client drives; later ones are read-only observers.
/// Before any driver connects the scripted operator steers.
class ConsoleServer {
public:
    explicit ConsoleServer(ServeOptions opts);
    ~ConsoleServer();

    /// Binds and listens. Throws InvalidInput if the port is taken. Returns
    /// the bound port.
    unsigned short start();
    /// Serves until stop(); then writes the final report if out_dir is set.
    void run();
    /// Safe from any thread.
    void stop();

    double sim_time() const { return sim_time_.load(); }

    struct Impl;  // shared with the connection handlers

private:
    std::unique_ptr<Impl> impl_;
    std::atomic<double> sim_time_{0.0};
};

}  // namespace ppd::serve
